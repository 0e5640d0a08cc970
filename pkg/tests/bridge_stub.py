"""Minimal protocol server used to test the engine's bridge client.

Serves a deterministic pseudo-model over stdio. Fault flags inject the
protocol violations the client must reject.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

VOCAB = ["<bos>", "<eos>", "sun", "rain", "wind"]


def dist_for(source: list[int], prefix: list[int]) -> list[float | None]:
    h = (31 * len(source) + 7 * sum(prefix) + len(prefix)) % 97
    weights = [0.0, 1.0 + h % 5, 2.0 + (h // 5) % 7, 1.0 + (h // 35) % 3, 0.5 + h % 2]
    total = sum(weights)
    return [None if w == 0 else math.log(w / total) for w in weights]


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--no-hello", action="store_true")
    parser.add_argument("--wrong-id", action="store_true")
    parser.add_argument("--bad-length", action="store_true")
    parser.add_argument("--bad-norm", action="store_true")
    args = parser.parse_args()

    out = sys.stdout
    if not args.no_hello:
        out.write(json.dumps({"type": "hello", "vocab": VOCAB, "bos": 0, "eos": 1}) + "\n")
        out.flush()

    for line in sys.stdin:
        if not line.strip():
            continue
        msg = json.loads(line)
        if msg.get("type") == "bye":
            break
        if msg.get("type") != "next":
            out.write(json.dumps({"type": "err", "id": msg.get("id"), "msg": "bad type"}) + "\n")
            out.flush()
            continue
        log_probs = dist_for(msg["source"], msg["prefix"])
        if args.bad_length:
            log_probs = log_probs[:-1]
        if args.bad_norm:
            log_probs = [None if v is None else v + 0.5 for v in log_probs]
        reply_id = msg["id"] + 1 if args.wrong_id else msg["id"]
        out.write(json.dumps({"type": "dist", "id": reply_id, "log_probs": log_probs}) + "\n")
        out.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
