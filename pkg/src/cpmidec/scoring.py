"""Token-wise score functions: log-probability, PMI, and gated PMI.

The gated score of token y at one step is

    cond_logp(y) - lambda * 1{H(cond) >= tau} * marg_logp(y)

with H the Shannon entropy of the conditional next-token distribution.
PMI(lambda) is the tau=0 special case (the gate always fires since H >= 0),
and LogProb is lambda=0 / tau=+inf. The decoder maximizes the raw gated
score; evaluation code that needs a proper log-probability uses
normalized_step_logprobs, the log-softmax of the same score vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from . import _kernels
from .corpus import Sequence
from .errors import InvalidToken, MissingMarginal, VocabMismatch
from .models import (
    ConditionalModel,
    Distribution,
    MarginalModel,
    log_sum_exp,
    require_same_vocab,
)


@dataclass(frozen=True)
class ScoreStrategy:
    """Decoding objective: LogProb, PMI(lambda), or CPMI(lambda, tau)."""

    kind: str
    lam: float = 0.0
    tau: float = math.inf

    def __post_init__(self) -> None:
        if self.kind not in ("logprob", "pmi", "cpmi"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0 (or +inf)")

    @classmethod
    def logprob(cls) -> "ScoreStrategy":
        return cls("logprob")

    @classmethod
    def pmi(cls, lam: float) -> "ScoreStrategy":
        return cls("pmi", lam=lam, tau=0.0)

    @classmethod
    def cpmi(cls, lam: float, tau: float) -> "ScoreStrategy":
        return cls("cpmi", lam=lam, tau=tau)

    @property
    def needs_marginal(self) -> bool:
        return self.kind != "logprob"

    def gate_fires(self, entropy: float) -> bool:
        if self.kind == "logprob":
            return False
        if self.kind == "pmi":
            return True
        return entropy >= self.tau


@dataclass(frozen=True)
class StepScore:
    """One scored decoding step. marg_logp is None under LogProb."""

    token: int
    cond_logp: float
    marg_logp: float | None
    entropy: float
    gate_fired: bool
    score: float


def shannon_entropy(dist: Distribution) -> float:
    """H(p) in nats; zero-probability entries contribute zero."""
    return _kernels.entropy(dist.log_probs)


def token_rank(dist: Distribution, token_id: int) -> int:
    """1-based rank by descending probability; ties go to the smaller id."""
    if not 0 <= token_id < len(dist):
        raise InvalidToken(f"token id {token_id} outside vocabulary of {len(dist)}")
    return _kernels.rank(dist.log_probs, token_id)


def rank_in_scores(scores: np.ndarray, token_id: int) -> int:
    """token_rank over an arbitrary score vector (same tie-break)."""
    if not 0 <= token_id < scores.size:
        raise InvalidToken(f"token id {token_id} outside vocabulary of {scores.size}")
    return _kernels.rank(scores, token_id)


@dataclass(frozen=True)
class StepVector:
    """All candidate scores for one expansion, shared across tokens."""

    scores: np.ndarray
    entropy: float
    gate_fired: bool


def step_vector(
    strategy: ScoreStrategy,
    cond: Distribution,
    marg: Distribution | None,
) -> StepVector:
    """Gated score vector for every candidate token at one step.

    A token the conditional model rules out (cond_logp = -inf) keeps score
    -inf: the marginal penalty never resurrects impossible continuations.
    With lambda = 0 the penalty is identically zero, which keeps the
    LogProb degeneracy exact even for -inf marginals.
    """
    if strategy.needs_marginal:
        if marg is None:
            raise MissingMarginal(f"strategy {strategy.kind} requires a marginal model")
        if len(marg) != len(cond):
            raise VocabMismatch("conditional and marginal distributions differ in size")
    entropy = shannon_entropy(cond)
    gate = strategy.gate_fires(entropy)
    cond_lp = cond.log_probs
    if gate and strategy.lam != 0.0 and marg is not None:
        with np.errstate(invalid="ignore"):
            scores = cond_lp - strategy.lam * marg.log_probs
        scores = np.where(cond_lp == -math.inf, -math.inf, scores)
    else:
        scores = cond_lp
    return StepVector(scores=scores, entropy=entropy, gate_fired=gate)


def step_score(
    strategy: ScoreStrategy,
    cond: Distribution,
    marg: Distribution | None,
    token_id: int,
) -> StepScore:
    """Score one token at one step; see StepVector for the shared math."""
    if not 0 <= token_id < len(cond):
        raise InvalidToken(f"token id {token_id} outside vocabulary of {len(cond)}")
    vec = step_vector(strategy, cond, marg)
    return StepScore(
        token=token_id,
        cond_logp=float(cond.log_probs[token_id]),
        marg_logp=float(marg.log_probs[token_id]) if strategy.needs_marginal else None,
        entropy=vec.entropy,
        gate_fired=vec.gate_fired,
        score=float(vec.scores[token_id]),
    )


def normalized_step_logprobs(vec: StepVector, cond: Distribution) -> np.ndarray:
    """Log-softmax of the gated score vector: the step's induced log-probs.

    When the penalty was not applied the vector already is the conditional
    distribution and is returned untouched, so LogProb-degenerate strategies
    yield bit-identical values.
    """
    if vec.scores is cond.log_probs:
        return cond.log_probs
    return vec.scores - log_sum_exp(vec.scores)


@dataclass(frozen=True)
class SequenceScore:
    steps: tuple[StepScore, ...]
    total: float


def score_sequence(
    strategy: ScoreStrategy,
    cond_model: ConditionalModel,
    marg_model: MarginalModel | None,
    source: Sequence,
    target: Sequence,
) -> SequenceScore:
    """Sum of step scores over y_1..y_T; BOS is context only, EOS is scored."""
    vocab = cond_model.vocabulary
    if not target.is_complete(vocab):
        raise ValueError("target must be a complete sequence")
    if strategy.needs_marginal:
        if marg_model is None:
            raise MissingMarginal(f"strategy {strategy.kind} requires a marginal model")
        require_same_vocab(vocab, marg_model.vocabulary)
    steps: list[StepScore] = []
    prefix = Sequence(target.ids[:1])
    for token_id in target.ids[1:]:
        cond = cond_model.next_dist(source, prefix)
        marg = marg_model.next_dist(prefix) if strategy.needs_marginal else None
        steps.append(step_score(strategy, cond, marg, token_id))
        prefix = prefix.extended(token_id)
    return SequenceScore(steps=tuple(steps), total=math.fsum(s.score for s in steps))


def trace_records(doc_id: str, steps: Iterable[StepScore]) -> Iterator[dict]:
    """Newline-JSON-able export of a scoring trace."""
    for t, s in enumerate(steps, start=1):
        yield {
            "doc_id": doc_id,
            "t": t,
            "token": s.token,
            "cond_logp": s.cond_logp,
            "marg_logp": s.marg_logp,
            "entropy": s.entropy,
            "gate_fired": s.gate_fired,
            "score": s.score,
        }
