"""Client side of the external-model wire protocol.

Newline-delimited JSON over a child process's stdio or one TCP connection:

    server -> engine on start : {"type":"hello","vocab":[...],"bos":0,"eos":1}
    engine -> server          : {"type":"next","id":7,"source":[...],"prefix":[...]}
    server -> engine          : {"type":"dist","id":7,"log_probs":[...]}
    engine -> server on close : {"type":"bye"}

log_probs entries are JSON numbers or null (null encodes -inf, which JSON
cannot carry). Replies must have exactly |vocab| entries with logsumexp
within 1e-4 of zero; accepted vectors are renormalized exactly before use.
Marginal-mode requests send "source": []. Request ids are strictly
increasing per connection, and requests on one connection are serialized.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .corpus import Sequence, Vocabulary
from .errors import BridgeIO, BridgeTimeout, ProtocolViolation
from .models import Distribution, log_sum_exp

RAW_NORMALIZATION_TOL = 1e-4
DEFAULT_TIMEOUT = 30.0


class _StdioTransport:
    """Child process with line-buffered pipes; a reader thread feeds a queue
    so receives can time out."""

    def __init__(self, cmd: str):
        self.cmd = cmd
        try:
            self.proc = subprocess.Popen(
                shlex.split(cmd),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeIO(f"cannot launch bridge server: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        assert self.proc.stdout is not None
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send_line(self, line: str) -> None:
        if self.proc.stdin is None or self.proc.poll() is not None:
            raise BridgeIO("bridge server process has exited")
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeIO(f"write to bridge server failed: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise BridgeTimeout(f"no reply within {timeout}s") from None
        if line is None:
            raise BridgeIO("bridge server closed its output")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            if self.proc.stdin is not None:
                self.proc.stdin.close()
            self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        self.host, self.port = host, port
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise BridgeIO(f"cannot connect to {host}:{port}: {exc}") from exc
        self.file = self.sock.makefile("rw", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self.file.write(line + "\n")
            self.file.flush()
        except OSError as exc:
            raise BridgeIO(f"write to bridge server failed: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        self.sock.settimeout(timeout)
        try:
            line = self.file.readline()
        except socket.timeout:
            raise BridgeTimeout(f"no reply within {timeout}s") from None
        except OSError as exc:
            raise BridgeIO(f"read from bridge server failed: {exc}") from exc
        if line == "":
            raise BridgeIO("bridge server closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            self.file.close()
            self.sock.close()
        except OSError:
            pass


def parse_log_probs(entries: list, expected_len: int) -> np.ndarray:
    if not isinstance(entries, list) or len(entries) != expected_len:
        raise ProtocolViolation(
            f"log_probs must have exactly {expected_len} entries, "
            f"got {len(entries) if isinstance(entries, list) else type(entries).__name__}"
        )
    out = np.empty(expected_len, dtype=np.float64)
    for i, v in enumerate(entries):
        if v is None:
            out[i] = -math.inf
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            out[i] = float(v)
        else:
            raise ProtocolViolation(f"log_probs[{i}] is not a number or null")
    if np.any(np.isnan(out)) or np.any(out == math.inf):
        raise ProtocolViolation("log_probs entries must be finite or null")
    return out


@dataclass
class RawReply:
    reply_id: int
    log_probs: np.ndarray
    logsumexp: float
    line: str


class BridgeModel:
    """One protocol connection exposing conditional/marginal model views."""

    def __init__(self, transport, timeout: float = DEFAULT_TIMEOUT, _spec=None):
        self._transport = transport
        self._timeout = timeout
        self._spec = _spec
        self._lock = threading.Lock()
        self._next_id = 1
        self._children: list[BridgeModel] = []
        self.vocabulary = self._handshake()

    @classmethod
    def spawn(cls, cmd: str, timeout: float = DEFAULT_TIMEOUT) -> "BridgeModel":
        return cls(_StdioTransport(cmd), timeout, _spec=("cmd", cmd))

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> "BridgeModel":
        return cls(_TcpTransport(host, port, timeout), timeout, _spec=("tcp", (host, port)))

    def _handshake(self) -> Vocabulary:
        msg = self._read_json()
        if msg.get("type") != "hello":
            raise ProtocolViolation(f"expected hello, got {msg.get('type')!r}")
        vocab = msg.get("vocab")
        if not isinstance(vocab, list) or len(vocab) < 3:
            raise ProtocolViolation("hello must carry a vocab of at least 3 tokens")
        if not all(isinstance(t, str) for t in vocab):
            raise ProtocolViolation("hello vocab entries must be strings")
        try:
            return Vocabulary(tuple(vocab), int(msg["bos"]), int(msg["eos"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"invalid hello vocabulary: {exc}") from exc

    def _read_json(self) -> dict:
        line = self._transport.recv_line(self._timeout)
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolViolation(f"reply is not JSON: {exc.msg}") from None
        if not isinstance(msg, dict):
            raise ProtocolViolation("reply is not a JSON object")
        return msg

    def request_raw(self, source_ids: list[int], prefix_ids: list[int]) -> RawReply:
        """One next-token request; returns the validated raw reply."""
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            request = {
                "type": "next",
                "id": req_id,
                "source": list(source_ids),
                "prefix": list(prefix_ids),
            }
            self._transport.send_line(json.dumps(request, separators=(",", ":")))
            msg = self._read_json()
        if msg.get("type") == "err":
            raise ProtocolViolation(f"server error reply: {msg.get('msg')!r}")
        if msg.get("type") != "dist":
            raise ProtocolViolation(f"expected dist reply, got {msg.get('type')!r}")
        if msg.get("id") != req_id:
            raise ProtocolViolation(f"reply id {msg.get('id')!r} != request id {req_id}")
        log_probs = parse_log_probs(msg.get("log_probs"), len(self.vocabulary))
        lse = log_sum_exp(log_probs)
        if not abs(lse) <= RAW_NORMALIZATION_TOL:
            raise ProtocolViolation(f"reply distribution off-normalized: logsumexp={lse!r}")
        return RawReply(
            reply_id=req_id,
            log_probs=log_probs,
            logsumexp=lse,
            line=json.dumps(msg, separators=(",", ":")),
        )

    def next_distribution(self, source: Sequence | None, prefix: Sequence) -> Distribution:
        src = list(source.ids) if source is not None else []
        reply = self.request_raw(src, list(prefix.ids))
        return Distribution.renormalized(reply.log_probs)

    @property
    def conditional(self) -> "BridgeConditional":
        return BridgeConditional(self)

    @property
    def marginal(self) -> "BridgeMarginal":
        return BridgeMarginal(self)

    def fork(self) -> "BridgeModel":
        """Fresh connection to the same endpoint (one per decode worker)."""
        if self._spec is None:
            raise BridgeIO("this bridge connection cannot be forked")
        kind, arg = self._spec
        child = (
            BridgeModel.spawn(arg, self._timeout)
            if kind == "cmd"
            else BridgeModel.connect(arg[0], arg[1], self._timeout)
        )
        self._children.append(child)
        return child

    def close(self) -> None:
        for child in self._children:
            child.close()
        self._children.clear()
        try:
            self._transport.send_line(json.dumps({"type": "bye"}))
        except BridgeIO:
            pass
        self._transport.close()

    def __enter__(self) -> "BridgeModel":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class BridgeConditional:
    bridge: BridgeModel

    @property
    def vocabulary(self) -> Vocabulary:
        return self.bridge.vocabulary

    def next_dist(self, source: Sequence, prefix: Sequence) -> Distribution:
        return self.bridge.next_distribution(source, prefix)

    def for_worker(self, index: int) -> "BridgeConditional":
        return self if index == 0 else BridgeConditional(self.bridge.fork())


@dataclass
class BridgeMarginal:
    bridge: BridgeModel

    @property
    def vocabulary(self) -> Vocabulary:
        return self.bridge.vocabulary

    def next_dist(self, prefix: Sequence) -> Distribution:
        return self.bridge.next_distribution(None, prefix)

    def for_worker(self, index: int) -> "BridgeMarginal":
        return self if index == 0 else BridgeMarginal(self.bridge.fork())


# -- conformance probe --------------------------------------------------------


@dataclass
class ProbeReport:
    requests: int
    max_abs_logsumexp: float
    transcript_checked: int
    transcript_mismatches: int
    failures: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.failures and self.transcript_mismatches == 0


def run_probe(
    bridge: BridgeModel,
    n_requests: int = 1000,
    seed: int = 0,
    max_depth: int = 3,
    sources: list[Sequence] | None = None,
    strict_tol: float = 1e-6,
    transcript: list[dict] | None = None,
) -> ProbeReport:
    """Protocol conformance probe: random seeded walks plus an optional
    golden-transcript replay.

    Walks start at [BOS] and extend by sampling the replied distribution,
    so requests stay inside the wrapped model's support. With sources given
    (conditional servers), each walk cycles through them; otherwise requests
    carry an empty source (marginal servers).
    """
    rng = np.random.default_rng(seed)
    vocab = bridge.vocabulary
    failures: list[str] = []
    max_dev = 0.0

    checked = 0
    mismatches = 0
    if transcript:
        for entry in transcript:
            request = json.loads(entry["request_line"])
            with bridge._lock:
                bridge._next_id = max(bridge._next_id, int(request["id"]))
                bridge._transport.send_line(entry["request_line"])
                got = bridge._transport.recv_line(bridge._timeout)
                bridge._next_id = int(request["id"]) + 1
            checked += 1
            if got != entry["reply_line"]:
                mismatches += 1
                if len(failures) < 5:
                    failures.append(
                        f"transcript reply mismatch for id {request['id']}: {got!r}"
                    )

    done = 0
    walk_sources = sources if sources else [None]
    src_idx = 0
    while done < n_requests:
        source = walk_sources[src_idx % len(walk_sources)]
        src_idx += 1
        prefix = [vocab.bos_id]
        for _ in range(max_depth):
            if done >= n_requests:
                break
            src_ids = list(source.ids) if source is not None else []
            try:
                reply = bridge.request_raw(src_ids, prefix)
            except Exception as exc:
                failures.append(f"request {done + 1} failed: {type(exc).__name__}: {exc}")
                return ProbeReport(done, max_dev, checked, mismatches, tuple(failures))
            done += 1
            max_dev = max(max_dev, abs(reply.logsumexp))
            if abs(reply.logsumexp) > strict_tol:
                failures.append(
                    f"request {done}: |logsumexp| {abs(reply.logsumexp):.3e} > {strict_tol:.0e}"
                )
                return ProbeReport(done, max_dev, checked, mismatches, tuple(failures))
            probs = np.exp(Distribution.renormalized(reply.log_probs).log_probs)
            token = int(rng.choice(len(vocab), p=probs / probs.sum()))
            if token in (vocab.eos_id, vocab.bos_id):
                break
            prefix.append(token)

    return ProbeReport(done, max_dev, checked, mismatches, tuple(failures))
