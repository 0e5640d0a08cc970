"""Beam search over token-wise score functions, plus an exact oracle.

A hypothesis that emits EOS is frozen: it stays in the beam and competes
on score but is never extended. Unfinished survivors at the step limit are
force-terminated with a normally-scored EOS. Scores are raw sums of the
gated step scores; no length normalization is applied anywhere. All ties
break deterministically: higher score first, then lexicographically
smaller id sequence.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Sequence
from .errors import InstanceTooLarge, InvalidBeam, MissingMarginal
from .models import ConditionalModel, Distribution, MarginalModel, require_same_vocab
from .scoring import ScoreStrategy, StepScore, StepVector, step_vector

EXHAUSTIVE_GUARD = 10**6


@dataclass(frozen=True)
class Hypothesis:
    seq: Sequence
    score: float
    trace: tuple[StepScore, ...]
    finished: bool


@dataclass(frozen=True)
class SearchStats:
    steps: int
    gate_fired_count: int
    max_entropy: float


@dataclass(frozen=True)
class DecodeResult:
    best: Hypothesis
    beam_final: tuple[Hypothesis, ...]
    stats: SearchStats


def _hyp_order(h: Hypothesis) -> tuple:
    return (-h.score, h.seq.ids)


class _Expansion:
    """One parent's scored extension set, kept until selection resolves."""

    __slots__ = ("parent", "vec", "cond", "marg")

    def __init__(
        self,
        parent: Hypothesis,
        vec: StepVector,
        cond: Distribution,
        marg: Distribution | None,
    ):
        self.parent = parent
        self.vec = vec
        self.cond = cond
        self.marg = marg

    def child(self, token_id: int) -> Hypothesis:
        step = StepScore(
            token=token_id,
            cond_logp=float(self.cond.log_probs[token_id]),
            marg_logp=float(self.marg.log_probs[token_id]) if self.marg is not None else None,
            entropy=self.vec.entropy,
            gate_fired=self.vec.gate_fired,
            score=float(self.vec.scores[token_id]),
        )
        return Hypothesis(
            seq=self.parent.seq.extended(token_id),
            score=self.parent.score + step.score,
            trace=self.parent.trace + (step,),
            finished=False,
        )


def beam_search(
    strategy: ScoreStrategy,
    cond_model: ConditionalModel,
    marg_model: MarginalModel | None,
    source: Sequence,
    k: int = 5,
    n_max: int = 32,
) -> DecodeResult:
    if k < 1:
        raise InvalidBeam(f"beam size must be >= 1, got {k}")
    if n_max < 1:
        raise InvalidBeam(f"n_max must be >= 1, got {n_max}")
    vocab = cond_model.vocabulary
    if strategy.needs_marginal:
        if marg_model is None:
            raise MissingMarginal(f"strategy {strategy.kind} requires a marginal model")
        require_same_vocab(vocab, marg_model.vocabulary)
    eos = vocab.eos_id
    extension_ids = np.array(vocab.content_ids(), dtype=np.int64)

    gate_count = 0
    max_entropy = -math.inf
    steps_run = 0

    def expand(parent: Hypothesis) -> _Expansion:
        nonlocal gate_count, max_entropy
        cond = cond_model.next_dist(source, parent.seq)
        marg = marg_model.next_dist(parent.seq) if strategy.needs_marginal else None
        vec = step_vector(strategy, cond, marg)
        gate_count += int(vec.gate_fired)
        max_entropy = max(max_entropy, vec.entropy)
        return _Expansion(parent, vec, cond, marg)

    beam = [Hypothesis(Sequence((vocab.bos_id,)), 0.0, (), False)]
    for _ in range(n_max):
        if all(h.finished for h in beam):
            break
        steps_run += 1
        carried: list[Hypothesis] = []
        expansions: list[_Expansion] = []
        for hyp in beam:
            if hyp.finished:
                carried.append(hyp)
            else:
                expansions.append(expand(hyp))

        scores: list[np.ndarray] = []
        if carried:
            scores.append(np.array([h.score for h in carried], dtype=np.float64))
        for exp in expansions:
            scores.append(exp.parent.score + exp.vec.scores[extension_ids])
        all_scores = np.concatenate(scores)

        if all_scores.size > k:
            kth = np.partition(all_scores, all_scores.size - k)[all_scores.size - k]
            keep_mask = all_scores >= kth
        else:
            keep_mask = np.ones(all_scores.size, dtype=bool)

        survivors: list[Hypothesis] = []
        offset = 0
        for i, hyp in enumerate(carried):
            if keep_mask[i]:
                survivors.append(hyp)
        offset = len(carried)
        width = extension_ids.size
        for exp in expansions:
            block = keep_mask[offset : offset + width]
            for j in np.nonzero(block)[0]:
                token_id = int(extension_ids[j])
                child = exp.child(token_id)
                if token_id == eos:
                    child = Hypothesis(child.seq, child.score, child.trace, True)
                survivors.append(child)
            offset += width

        survivors.sort(key=_hyp_order)
        beam = survivors[:k]

    final: list[Hypothesis] = []
    for hyp in beam:
        if hyp.finished:
            final.append(hyp)
        else:
            exp = expand(hyp)
            child = exp.child(eos)
            final.append(Hypothesis(child.seq, child.score, child.trace, True))
    final.sort(key=_hyp_order)

    return DecodeResult(
        best=final[0],
        beam_final=tuple(final),
        stats=SearchStats(
            steps=steps_run,
            gate_fired_count=gate_count,
            max_entropy=max_entropy,
        ),
    )


def exhaustive_argmax(
    strategy: ScoreStrategy,
    cond_model: ConditionalModel,
    marg_model: MarginalModel | None,
    source: Sequence,
    n_max: int,
) -> Hypothesis:
    """True maximizer over every complete sequence of content length <= n_max.

    Same additive score and tie-break as beam_search; in particular
    beam_search with k = |vocab|**n_max must reproduce this exactly.
    """
    vocab = cond_model.vocabulary
    if len(vocab) ** n_max > EXHAUSTIVE_GUARD:
        raise InstanceTooLarge(
            f"|vocab|^n_max = {len(vocab)}^{n_max} exceeds {EXHAUSTIVE_GUARD}"
        )
    if strategy.needs_marginal:
        if marg_model is None:
            raise MissingMarginal(f"strategy {strategy.kind} requires a marginal model")
        require_same_vocab(vocab, marg_model.vocabulary)
    content_alphabet = tuple(i for i in vocab.content_ids() if i != vocab.eos_id)
    eos = vocab.eos_id

    vec_cache: dict[tuple[int, ...], _Expansion] = {}

    def expansion_at(prefix_ids: tuple[int, ...]) -> _Expansion:
        exp = vec_cache.get(prefix_ids)
        if exp is None:
            prefix = Sequence(prefix_ids)
            cond = cond_model.next_dist(source, prefix)
            marg = marg_model.next_dist(prefix) if strategy.needs_marginal else None
            parent = Hypothesis(prefix, 0.0, (), False)
            exp = _Expansion(parent, step_vector(strategy, cond, marg), cond, marg)
            vec_cache[prefix_ids] = exp
        return exp

    best_ids: tuple[int, ...] | None = None
    best_total = -math.inf
    for length in range(n_max + 1):
        for body in itertools.product(content_alphabet, repeat=length):
            ids = (vocab.bos_id,) + body + (eos,)
            total = 0.0
            prefix = ids[:1]
            for token_id in ids[1:]:
                total += float(expansion_at(prefix).vec.scores[token_id])
                prefix = prefix + (token_id,)
            if best_ids is None or total > best_total or (
                total == best_total and ids < best_ids
            ):
                best_ids = ids
                best_total = total

    assert best_ids is not None
    trace: list[StepScore] = []
    prefix = best_ids[:1]
    score = 0.0
    for token_id in best_ids[1:]:
        exp = expansion_at(prefix)
        step = exp.child(token_id).trace[-1]
        trace.append(step)
        score += step.score
        prefix = prefix + (token_id,)
    return Hypothesis(Sequence(best_ids), score, tuple(trace), True)


@dataclass(frozen=True)
class CorpusDecode:
    """Per-document outcomes in corpus order; failures carried separately."""

    succeeded: tuple[tuple[str, DecodeResult], ...]
    failed: tuple[tuple[str, str], ...]

    @property
    def ok(self) -> bool:
        return not self.failed


def decode_corpus(
    strategy: ScoreStrategy,
    cond_model: ConditionalModel,
    marg_model: MarginalModel | None,
    corpus: Corpus,
    k: int = 5,
    n_max: int = 32,
    workers: int = 1,
) -> CorpusDecode:
    require_same_vocab(corpus.vocabulary, cond_model.vocabulary)
    if strategy.needs_marginal and marg_model is not None:
        require_same_vocab(corpus.vocabulary, marg_model.vocabulary)

    def worker_view(model, index: int):
        fork = getattr(model, "for_worker", None)
        return fork(index) if fork is not None else model

    n_workers = max(1, workers)
    cond_views = [worker_view(cond_model, i) for i in range(n_workers)]
    marg_views = [
        worker_view(marg_model, i) if marg_model is not None else None
        for i in range(n_workers)
    ]

    def run_one(args) -> tuple[str, DecodeResult | None, str | None]:
        widx, doc = args
        cond = cond_views[widx]
        marg = marg_views[widx]
        try:
            result = beam_search(strategy, cond, marg, doc.source, k=k, n_max=n_max)
            return doc.id, result, None
        except Exception as exc:  # per-document isolation by contract
            return doc.id, None, f"{type(exc).__name__}: {exc}"

    docs = list(corpus.documents)
    if n_workers == 1 or len(docs) <= 1:
        outcomes = [run_one((0, doc)) for doc in docs]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(
                pool.map(run_one, ((i % n_workers, d) for i, d in enumerate(docs)))
            )

    succeeded = tuple((doc_id, res) for doc_id, res, err in outcomes if err is None)
    failed = tuple((doc_id, err) for doc_id, _, err in outcomes if err is not None)
    return CorpusDecode(succeeded=succeeded, failed=failed)
