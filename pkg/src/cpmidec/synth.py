"""Synthetic hallucination benchmark: a step-indexed table world whose
summarizer is lured toward a generic distractor token exactly at
high-entropy steps.

Construction, per document: a theme of topic tokens forms the source and
the faithful continuation. Most steps are confident (one dominant token,
entropy well under the gate region). At two designated steps the
conditional spreads out (entropy >= 3 nats) with the source-irrelevant
distractor narrowly on top and the faithful topic token second. The
distractor also carries a floor probability at every confident step, so
its marginal probability under the prior-weighted mixture is an order of
magnitude above any topic token's. Some designated steps keep a faithful
reference token; the rest put the distractor into the reference itself as
a hallucinated run of length one or two, mirroring annotated references
whose spans are unfaithful. Plain log-probability decoding therefore picks
the distractor at every designated step, while gated PMI decoding flips
those steps to the faithful token at a small, bounded ROUGE cost.

The generator brute-force-verifies its own rows (entropy bounds, argmax
placement) before returning, so tests can rely on the designated geometry.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import (
    Corpus,
    LabeledDocument,
    Sequence,
    SpanAnnotation,
    Vocabulary,
    spans_to_token_labels,
    write_corpus,
)
from .decoder import DecodeResult
from .models import Distribution, StepTableWorld, save_world
from .scoring import shannon_entropy

DEFAULT_SEED = 613

DISTRACTOR = "basically"
RUN_FILLER = "reportedly"


@dataclass(frozen=True)
class SynthConfig:
    n_docs: int = 200
    length: int = 12
    n_topics: int = 100
    seed: int = DEFAULT_SEED
    hallucinated_ref_rate: float = 0.4
    distractor_peak_range: tuple[float, float] = (0.17, 0.23)
    faithful_gap: float = 0.05
    steady_prob: float = 0.88
    distractor_floor: float = 0.05
    eos_leak: float = 1e-4
    final_eos_prob: float = 0.995
    min_designated_entropy: float = 3.0
    max_steady_entropy: float = 2.5


@dataclass(frozen=True)
class DesignatedStep:
    doc_id: str
    content_index: int
    reference_is_distractor: bool
    entropy: float


@dataclass(frozen=True)
class SynthBenchmark:
    world: StepTableWorld
    corpus: Corpus
    designated: tuple[DesignatedStep, ...]
    distractor_id: int

    @property
    def vocabulary(self) -> Vocabulary:
        return self.corpus.vocabulary


def _spread(rng: np.random.Generator, row: np.ndarray, mass: float, blocked: set[int]) -> None:
    """Distribute mass over all unblocked non-BOS entries with mild jitter."""
    open_ids = np.array(
        [i for i in range(row.size) if i not in blocked], dtype=np.int64
    )
    weights = 0.5 + rng.random(open_ids.size)
    row[open_ids] += mass * weights / weights.sum()


def generate_benchmark(config: SynthConfig = SynthConfig()) -> SynthBenchmark:
    cfg = config
    if cfg.length < 12:
        raise ValueError("documents need at least 12 content tokens")
    rng = np.random.default_rng(cfg.seed)
    tokens = ["<bos>", "<eos>", DISTRACTOR, RUN_FILLER] + [
        f"topic{i:03d}" for i in range(cfg.n_topics)
    ]
    vocab = Vocabulary(tuple(tokens))
    n = len(vocab)
    bos, eos, dst, fil = 0, 1, 2, 3
    topic_ids = np.arange(4, n, dtype=np.int64)

    sources: list[Sequence] = []
    docs: list[LabeledDocument] = []
    designated: list[DesignatedStep] = []
    all_rows: list[tuple[Distribution, ...]] = []
    seen_sources: set[tuple[int, ...]] = set()

    for doc_index in range(cfg.n_docs):
        doc_id = f"doc{doc_index:04d}"
        theme = rng.choice(topic_ids, size=cfg.length, replace=True)
        pos_a = int(rng.integers(2, 6))
        pos_b = int(rng.integers(7, 11))
        plan = []
        for pos in (pos_a, pos_b):
            is_dist = bool(rng.random() < cfg.hallucinated_ref_rate)
            run_two = bool(is_dist and rng.random() < 0.5)
            plan.append((pos, is_dist, run_two))

        reference = theme.copy()
        spans: list[SpanAnnotation] = []
        subsequent_positions: set[int] = set()
        for pos, is_dist, run_two in plan:
            if is_dist:
                reference[pos] = dst
                end = pos + 1
                if run_two:
                    reference[pos + 1] = fil
                    subsequent_positions.add(pos + 1)
                    end = pos + 2
                spans.append(SpanAnnotation(pos, end))

        source_ids = (bos,) + tuple(int(t) for t in rng.permutation(theme))
        if source_ids in seen_sources:
            raise RuntimeError("source collision; change the seed")
        seen_sources.add(source_ids)
        source = Sequence(source_ids)

        rows: list[Distribution] = []
        designated_at = {pos: (is_dist, run_two) for pos, is_dist, run_two in plan}
        for j in range(cfg.length):
            row = np.zeros(n, dtype=np.float64)
            if j in designated_at:
                peak = float(rng.uniform(*cfg.distractor_peak_range))
                faithful = int(theme[j])
                row[dst] = peak
                row[faithful] = peak - cfg.faithful_gap
                row[eos] = cfg.eos_leak
                rest = 1.0 - row.sum()
                _spread(rng, row, rest, blocked={bos, eos, dst, faithful})
            else:
                top = int(reference[j])
                row[top] = cfg.steady_prob
                row[dst] = cfg.distractor_floor if top != dst else row[dst]
                row[eos] = cfg.eos_leak
                rest = 1.0 - row.sum()
                _spread(rng, row, rest, blocked={bos, eos, dst, top})
            rows.append(Distribution.from_probs(row))
        final = np.zeros(n, dtype=np.float64)
        final[eos] = cfg.final_eos_prob
        _spread(rng, final, 1.0 - cfg.final_eos_prob, blocked={bos, eos})
        rows.append(Distribution.from_probs(final))

        for pos, is_dist, _run_two in plan:
            h = shannon_entropy(rows[pos])
            designated.append(DesignatedStep(doc_id, pos, is_dist, h))

        sources.append(source)
        all_rows.append(tuple(rows))
        ref_seq = Sequence((bos,) + tuple(int(t) for t in reference) + (eos,))
        labels = spans_to_token_labels(cfg.length, spans)
        docs.append(LabeledDocument(doc_id, source, ref_seq, labels))

    prior = tuple([1.0 / cfg.n_docs] * cfg.n_docs)
    world = StepTableWorld(
        vocabulary=vocab,
        sources=tuple(sources),
        prior=prior,
        step_rows=tuple(all_rows),
    )
    bench = SynthBenchmark(
        world=world,
        corpus=Corpus(tuple(docs), vocab),
        designated=tuple(designated),
        distractor_id=dst,
    )
    _verify(bench, cfg)
    return bench


def _verify(bench: SynthBenchmark, cfg: SynthConfig) -> None:
    """Recompute entropy and argmax placement from the materialized rows."""
    world = bench.world
    by_doc = {d.id: i for i, d in enumerate(bench.corpus.documents)}
    designated_lookup = {(d.doc_id, d.content_index) for d in bench.designated}
    for d in bench.designated:
        row = world.step_rows[by_doc[d.doc_id]][d.content_index]
        h = shannon_entropy(row)
        if h < cfg.min_designated_entropy:
            raise AssertionError(f"designated step entropy {h} below bound at {d}")
        if int(np.argmax(row.log_probs)) != bench.distractor_id:
            raise AssertionError(f"distractor not the conditional argmax at {d}")
    for i, doc in enumerate(bench.corpus.documents):
        for j in range(cfg.length):
            if (doc.id, j) in designated_lookup:
                continue
            row = world.step_rows[i][j]
            h = shannon_entropy(row)
            if h > cfg.max_steady_entropy:
                raise AssertionError(f"steady step entropy {h} too high in {doc.id}@{j}")
        final = world.step_rows[i][cfg.length]
        if int(np.argmax(final.log_probs)) != world.vocabulary.eos_id:
            raise AssertionError(f"final row of {doc.id} does not prefer EOS")


def count_distractor_picks(
    decoded: dict[str, DecodeResult], bench: SynthBenchmark
) -> tuple[int, int]:
    """(#designated steps where the output token is the distractor, #designated)."""
    picked = 0
    total = 0
    for d in bench.designated:
        result = decoded.get(d.doc_id)
        if result is None:
            continue
        total += 1
        ids = result.best.seq.ids
        out_pos = 1 + d.content_index
        if out_pos < len(ids) and ids[out_pos] == bench.distractor_id:
            picked += 1
    return picked, total


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Generate the synthetic hallucination benchmark files."
    )
    parser.add_argument("--out-dir", required=True, type=Path)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--docs", type=int, default=200)
    args = parser.parse_args(argv)

    bench = generate_benchmark(SynthConfig(n_docs=args.docs, seed=args.seed))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_corpus(bench.corpus, args.out_dir / "corpus.jsonl")
    save_world(bench.world, args.out_dir / "world.json")
    meta = [
        {
            "doc_id": d.doc_id,
            "content_index": d.content_index,
            "reference_is_distractor": d.reference_is_distractor,
            "entropy": d.entropy,
        }
        for d in bench.designated
    ]
    (args.out_dir / "designated.json").write_text(
        json.dumps({"seed": args.seed, "distractor": DISTRACTOR, "steps": meta}),
        encoding="utf-8",
    )
    print(f"wrote {len(bench.corpus)} documents to {args.out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
