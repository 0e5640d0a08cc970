"""Next-token probability models behind two small contracts.

ConditionalModel gives p(. | prefix, source) and MarginalModel gives
p(. | prefix); both return natural-log Distributions over the full coded
vocabulary. Everything here is immutable after construction and safe for
concurrent reads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .corpus import Corpus, Sequence, Vocabulary
from .errors import EmptyCorpus, UncoveredPrefix, VocabMismatch

NORMALIZATION_TOL = 1e-9


def log_sum_exp(values: np.ndarray) -> float:
    m = float(np.max(values))
    if m == -math.inf:
        return -math.inf
    return m + math.log(float(np.sum(np.exp(values - m))))


@dataclass(frozen=True, eq=False)
class Distribution:
    """Normalized natural-log probabilities over the coded vocabulary."""

    log_probs: np.ndarray

    def __post_init__(self) -> None:
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim != 1 or lp.size == 0:
            raise ValueError("log_probs must be a non-empty vector")
        if np.any(np.isnan(lp)) or np.any(lp == math.inf):
            raise ValueError("log_probs entries must be finite or -inf")
        total = log_sum_exp(lp)
        if not abs(total) <= NORMALIZATION_TOL:
            raise ValueError(f"distribution not normalized: logsumexp={total!r}")
        lp = lp.copy()
        lp.flags.writeable = False
        object.__setattr__(self, "log_probs", lp)

    def __len__(self) -> int:
        return int(self.log_probs.size)

    @classmethod
    def from_probs(cls, probs: np.ndarray) -> "Distribution":
        p = np.asarray(probs, dtype=np.float64)
        if np.any(p < 0):
            raise ValueError("negative probability")
        total = float(p.sum())
        if total <= 0:
            raise ValueError("probabilities sum to zero")
        with np.errstate(divide="ignore"):
            return cls(np.log(p / total))

    @classmethod
    def renormalized(cls, log_weights: np.ndarray) -> "Distribution":
        """Exact log-space renormalization of arbitrary finite-or--inf weights."""
        lw = np.asarray(log_weights, dtype=np.float64)
        return cls(lw - log_sum_exp(lw))


@runtime_checkable
class ConditionalModel(Protocol):
    vocabulary: Vocabulary

    def next_dist(self, source: Sequence, prefix: Sequence) -> Distribution: ...


@runtime_checkable
class MarginalModel(Protocol):
    vocabulary: Vocabulary

    def next_dist(self, prefix: Sequence) -> Distribution: ...


def require_same_vocab(a: Vocabulary, b: Vocabulary) -> None:
    if a != b:
        raise VocabMismatch("models/corpus must share one vocabulary")


# -- n-gram language model --------------------------------------------------


@dataclass(frozen=True)
class NGramLM:
    """Add-k n-gram model with recursive backoff to unseen contexts.

    Seen contexts are smoothed add-k over the full coded vocabulary;
    a context with zero observations falls back to the (n-1)-gram,
    bottoming out at the add-k unigram.
    """

    vocabulary: Vocabulary
    order: int
    k: float
    counts: tuple[dict[tuple[int, ...], dict[int, int]], ...]

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not self.k > 0:
            raise ValueError("smoothing constant k must be > 0")

    def _level_dist(self, level: int, context: tuple[int, ...]) -> np.ndarray:
        table = self.counts[level]
        row = table.get(context)
        if row is None and level > 0:
            return self._level_dist(level - 1, context[1:])
        n = len(self.vocabulary)
        probs = np.full(n, self.k, dtype=np.float64)
        total = self.k * n
        if row is not None:
            for token_id, c in row.items():
                probs[token_id] += c
                total += c
        return np.log(probs / total)

    def next_dist(self, prefix: Sequence) -> Distribution:
        ctx_len = self.order - 1
        padded = (self.vocabulary.bos_id,) * ctx_len + prefix.ids
        context = padded[len(padded) - ctx_len :] if ctx_len else ()
        return Distribution(self._level_dist(len(self.counts) - 1, context))

    def to_dict(self) -> dict:
        levels = []
        for table in self.counts:
            levels.append(
                {
                    " ".join(map(str, ctx)): {str(t): c for t, c in row.items()}
                    for ctx, row in table.items()
                }
            )
        return {
            "format": "cpmidec-ngram",
            "version": 1,
            "order": self.order,
            "k": self.k,
            "vocab": self.vocabulary.to_dict(),
            "counts": levels,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "NGramLM":
        if payload.get("format") != "cpmidec-ngram" or payload.get("version") != 1:
            raise ValueError("not a version-1 cpmidec-ngram file")
        levels = []
        for table in payload["counts"]:
            parsed: dict[tuple[int, ...], dict[int, int]] = {}
            for ctx, row in table.items():
                key = tuple(int(x) for x in ctx.split()) if ctx else ()
                parsed[key] = {int(t): int(c) for t, c in row.items()}
            levels.append(parsed)
        return cls(
            vocabulary=Vocabulary.from_dict(payload["vocab"]),
            order=int(payload["order"]),
            k=float(payload["k"]),
            counts=tuple(levels),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NGramLM":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_ngram(
    corpus: Corpus, order: int, k: float, fields: str = "references"
) -> NGramLM:
    """Collect m-gram counts for m = 1..order over BOS-padded sequences.

    fields selects the training text: "references" or "both" (sources get
    an EOS appended so they train end-of-sequence mass like references).
    """
    if len(corpus) == 0:
        raise EmptyCorpus("cannot train on an empty corpus")
    if fields not in ("references", "both"):
        raise ValueError("fields must be 'references' or 'both'")
    vocab = corpus.vocabulary
    levels: list[dict[tuple[int, ...], dict[int, int]]] = [dict() for _ in range(order)]
    for doc in corpus.documents:
        sequences = [doc.reference]
        if fields == "both":
            sequences.append(Sequence(doc.source.ids + (vocab.eos_id,)))
        for seq in sequences:
            ids = (vocab.bos_id,) * (order - 1) + seq.ids
            start = order - 1  # first predicted position: ids[start+?] ... after BOS block
            for pos in range(start + 1, len(ids)):
                target = ids[pos]
                for level in range(order):
                    ctx = ids[pos - level : pos]
                    row = levels[level].setdefault(tuple(ctx), {})
                    row[target] = row.get(target, 0) + 1
    return NGramLM(vocabulary=vocab, order=order, k=k, counts=tuple(levels))


# -- copy-mixture conditional model ------------------------------------------


@dataclass(frozen=True)
class CopyMixtureModel:
    """alpha * copy-from-source + (1 - alpha) * background LM.

    The copy component is the empirical unigram distribution over the
    source's content tokens with one pseudo-count of EOS, i.e. each source
    token has mass count/(L+1) and EOS has 1/(L+1).
    """

    alpha: float
    background: NGramLM

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @property
    def vocabulary(self) -> Vocabulary:
        return self.background.vocabulary

    def _copy_probs(self, source: Sequence) -> np.ndarray:
        vocab = self.vocabulary
        probs = np.zeros(len(vocab), dtype=np.float64)
        content = source.content(vocab)
        for t in content:
            probs[t] += 1.0
        probs[vocab.eos_id] += 1.0
        return probs / (len(content) + 1)

    def next_dist(self, source: Sequence, prefix: Sequence) -> Distribution:
        bg = np.exp(self.background.next_dist(prefix).log_probs)
        mixed = self.alpha * self._copy_probs(source) + (1.0 - self.alpha) * bg
        with np.errstate(divide="ignore"):
            return Distribution(np.log(mixed))


# -- source-free adapter ------------------------------------------------------


@dataclass(frozen=True)
class SourceFreeConditional:
    """Present a marginal-style model through the conditional contract."""

    lm: NGramLM

    @property
    def vocabulary(self) -> Vocabulary:
        return self.lm.vocabulary

    def next_dist(self, source: Sequence, prefix: Sequence) -> Distribution:
        return self.lm.next_dist(prefix)


# -- exact table worlds -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TableWorld:
    """Fully enumerated toy model: explicit rows per (source, prefix).

    sources carries the finite source set with a prior over it; rows[i]
    maps prefix id-tuples to Distributions for source i. Exact oracles
    (marginalization, exhaustive search) are computable on these.
    """

    vocabulary: Vocabulary
    sources: tuple[Sequence, ...]
    prior: tuple[float, ...]
    rows: tuple[dict[tuple[int, ...], Distribution], ...]
    _source_index: dict[tuple[int, ...], int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.sources) != len(self.prior) or len(self.sources) != len(self.rows):
            raise ValueError("sources, prior and rows must align")
        if abs(math.fsum(self.prior) - 1.0) > 1e-9 or any(p < 0 for p in self.prior):
            raise ValueError("prior must be a probability vector")
        index = {src.ids: i for i, src in enumerate(self.sources)}
        if len(index) != len(self.sources):
            raise ValueError("duplicate sources in world")
        object.__setattr__(self, "_source_index", index)

    def source_id(self, source: Sequence) -> int:
        try:
            return self._source_index[source.ids]
        except KeyError:
            raise UncoveredPrefix(f"source {source.ids} not in world") from None

    def next_dist(self, source: Sequence, prefix: Sequence) -> Distribution:
        table = self.rows[self.source_id(source)]
        try:
            return table[prefix.ids]
        except KeyError:
            raise UncoveredPrefix(f"prefix {prefix.ids} not covered") from None

    @property
    def conditional(self) -> "TableWorld":
        return self

    @property
    def marginal(self) -> "TableWorldMarginal":
        return TableWorldMarginal(self)

    def to_dict(self) -> dict:
        return {
            "format": "cpmidec-world",
            "version": 1,
            "kind": "prefix",
            "vocab": self.vocabulary.to_dict(),
            "sources": [list(s.ids) for s in self.sources],
            "prior": list(self.prior),
            "rows": [
                {
                    " ".join(map(str, pre)): [
                        None if lp == -math.inf else lp for lp in dist.log_probs
                    ]
                    for pre, dist in table.items()
                }
                for table in self.rows
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TableWorld":
        vocab = Vocabulary.from_dict(payload["vocab"])
        rows = []
        for table in payload["rows"]:
            parsed = {}
            for key, lps in table.items():
                pre = tuple(int(x) for x in key.split()) if key else ()
                lp = np.array(
                    [-math.inf if v is None else float(v) for v in lps], dtype=np.float64
                )
                parsed[pre] = Distribution.renormalized(lp)
            rows.append(parsed)
        return cls(
            vocabulary=vocab,
            sources=tuple(Sequence(tuple(int(i) for i in s)) for s in payload["sources"]),
            prior=tuple(float(p) for p in payload["prior"]),
            rows=tuple(rows),
        )


@dataclass(frozen=True)
class TableWorldMarginal:
    """Prior-weighted mixture of the world's conditional rows."""

    world: TableWorld

    @property
    def vocabulary(self) -> Vocabulary:
        return self.world.vocabulary

    def next_dist(self, prefix: Sequence) -> Distribution:
        return exact_marginal_dist(self.world, prefix)


def exact_marginal_dist(world: TableWorld, prefix: Sequence) -> Distribution:
    """sum_x p(x) * p(. | prefix, x) over the world's finite source set."""
    mix = np.zeros(len(world.vocabulary), dtype=np.float64)
    for weight, table in zip(world.prior, world.rows):
        try:
            dist = table[prefix.ids]
        except KeyError:
            raise UncoveredPrefix(f"prefix {prefix.ids} not covered") from None
        mix += weight * np.exp(dist.log_probs)
    with np.errstate(divide="ignore"):
        return Distribution.renormalized(np.log(mix))


# -- step-indexed table world -------------------------------------------------


@dataclass(frozen=True, eq=False)
class StepTableWorld:
    """Table world whose rows depend on the prefix only through its length.

    step_rows[i][t] is the distribution for source i when the prefix holds
    t tokens counting BOS, t = 1..T. Because every same-length prefix shares
    a row, all beam paths are covered without enumerating prefixes, which is
    what the synthetic hallucination corpus needs.
    """

    vocabulary: Vocabulary
    sources: tuple[Sequence, ...]
    prior: tuple[float, ...]
    step_rows: tuple[tuple[Distribution, ...], ...]
    _source_index: dict[tuple[int, ...], int] = field(init=False, repr=False)
    _marginal_rows: tuple[Distribution, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.sources) != len(self.prior) or len(self.sources) != len(self.step_rows):
            raise ValueError("sources, prior and step_rows must align")
        if abs(math.fsum(self.prior) - 1.0) > 1e-9 or any(p < 0 for p in self.prior):
            raise ValueError("prior must be a probability vector")
        depths = {len(rows) for rows in self.step_rows}
        if len(depths) != 1:
            raise ValueError("all sources must share the same depth")
        index = {src.ids: i for i, src in enumerate(self.sources)}
        if len(index) != len(self.sources):
            raise ValueError("duplicate sources in world")
        object.__setattr__(self, "_source_index", index)
        depth = depths.pop()
        marginals = []
        n = len(self.vocabulary)
        for t in range(depth):
            mix = np.zeros(n, dtype=np.float64)
            for weight, rows in zip(self.prior, self.step_rows):
                mix += weight * np.exp(rows[t].log_probs)
            with np.errstate(divide="ignore"):
                marginals.append(Distribution.renormalized(np.log(mix)))
        object.__setattr__(self, "_marginal_rows", tuple(marginals))

    @property
    def depth(self) -> int:
        return len(self.step_rows[0])

    def _row_index(self, prefix: Sequence) -> int:
        t = len(prefix) - 1
        if not 0 <= t < self.depth:
            raise UncoveredPrefix(f"prefix length {len(prefix)} outside depth {self.depth}")
        return t

    def next_dist(self, source: Sequence, prefix: Sequence) -> Distribution:
        try:
            i = self._source_index[source.ids]
        except KeyError:
            raise UncoveredPrefix(f"source {source.ids} not in world") from None
        return self.step_rows[i][self._row_index(prefix)]

    def marginal_dist(self, prefix: Sequence) -> Distribution:
        return self._marginal_rows[self._row_index(prefix)]

    @property
    def conditional(self) -> "StepTableWorld":
        return self

    @property
    def marginal(self) -> "StepTableMarginal":
        return StepTableMarginal(self)

    def to_dict(self) -> dict:
        return {
            "format": "cpmidec-world",
            "version": 1,
            "kind": "step",
            "vocab": self.vocabulary.to_dict(),
            "sources": [list(s.ids) for s in self.sources],
            "prior": list(self.prior),
            "rows": [
                [[None if lp == -math.inf else lp for lp in d.log_probs] for d in rows]
                for rows in self.step_rows
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "StepTableWorld":
        vocab = Vocabulary.from_dict(payload["vocab"])
        step_rows = tuple(
            tuple(
                Distribution.renormalized(
                    np.array(
                        [-math.inf if v is None else float(v) for v in lps],
                        dtype=np.float64,
                    )
                )
                for lps in rows
            )
            for rows in payload["rows"]
        )
        return cls(
            vocabulary=vocab,
            sources=tuple(Sequence(tuple(int(i) for i in s)) for s in payload["sources"]),
            prior=tuple(float(p) for p in payload["prior"]),
            step_rows=step_rows,
        )


@dataclass(frozen=True)
class StepTableMarginal:
    world: StepTableWorld

    @property
    def vocabulary(self) -> Vocabulary:
        return self.world.vocabulary

    def next_dist(self, prefix: Sequence) -> Distribution:
        return self.world.marginal_dist(prefix)


def save_world(world: TableWorld | StepTableWorld, path: str | Path) -> None:
    Path(path).write_text(json.dumps(world.to_dict()), encoding="utf-8")


def load_world(path: str | Path) -> TableWorld | StepTableWorld:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "cpmidec-world" or payload.get("version") != 1:
        raise ValueError("not a version-1 cpmidec-world file")
    if payload.get("kind") == "step":
        return StepTableWorld.from_dict(payload)
    return TableWorld.from_dict(payload)
