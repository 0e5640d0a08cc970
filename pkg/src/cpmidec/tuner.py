"""Grid search over (lambda, tau) with heat-map CSV output.

Each trial decodes the tuning corpus under the gated objective and scores
the references; the selection objective is a weighted sum of min-max
normalized mean ROUGE-L (higher better) and negated mean normalized
log-probability of initial hallucinated reference tokens (lower raw value
better). Weights default to 3:1. The published optima for the two XSum
summarizers ship as presets below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, Sequence, TokenLabel
from .decoder import decode_corpus
from .errors import MissingLabels, SweepAborted
from .evaluate import corpus_rouge, entropy_by_label, mean_rouge_f1
from .models import ConditionalModel, MarginalModel
from .scoring import ScoreStrategy, normalized_step_logprobs, step_vector

# Published optima: (lambda, tau) per wrapped summarizer family.
PRESETS = {
    "transformer-xsum": (0.13120, 3.5618),
    "bart-xsum": (0.65602, 3.5987),
}

CSV_HEADER = "lambda,tau,rouge_l,avg_logprob_initial,objective"


@dataclass(frozen=True)
class GridSpec:
    """Axes of the sweep. taus may be given explicitly or sampled uniformly
    within one standard deviation of the mean initial-token entropy."""

    lambdas: tuple[float, ...]
    taus: tuple[float, ...] | None = None
    tau_samples: int = 0
    seed: int = 0
    weights: tuple[float, float] = (3.0, 1.0)

    def __post_init__(self) -> None:
        if not self.lambdas:
            raise ValueError("grid needs at least one lambda")
        if any(l < 0 for l in self.lambdas):
            raise ValueError("lambda values must be >= 0")
        if self.taus is not None:
            if not self.taus:
                raise ValueError("explicit tau axis may not be empty")
            if any(t < 0 for t in self.taus):
                raise ValueError("tau values must be >= 0")
        elif self.tau_samples < 1:
            raise ValueError("either taus or tau_samples >= 1 required")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")


@dataclass(frozen=True)
class TrialResult:
    lam: float
    tau: float
    rouge_l_mean: float
    avg_logprob_initial: float
    objective: float = field(default=math.nan, compare=False)


@dataclass(frozen=True)
class SweepResult:
    best_lambda: float
    best_tau: float
    trials: tuple[TrialResult, ...]


@dataclass(frozen=True)
class Normalizers:
    rouge_min: float
    rouge_max: float
    neg_logprob_min: float
    neg_logprob_max: float


def _minmax(x: float, lo: float, hi: float) -> float:
    if hi > lo:
        return (x - lo) / (hi - lo)
    return 0.0


def tuning_objective(
    rouge_l_mean: float,
    avg_logprob_initial: float,
    grid: GridSpec,
    normalizers: Normalizers,
) -> float:
    w_rouge, w_hall = grid.weights
    r = _minmax(rouge_l_mean, normalizers.rouge_min, normalizers.rouge_max)
    h = _minmax(
        -avg_logprob_initial, normalizers.neg_logprob_min, normalizers.neg_logprob_max
    )
    return w_rouge * r + w_hall * h


def sample_taus(corpus: Corpus, cond_model: ConditionalModel, grid: GridSpec) -> tuple[float, ...]:
    """tau axis drawn uniformly from [mu - sd, mu + sd] of initial-token entropy."""
    report = entropy_by_label(corpus, cond_model)
    stats = report.entropy.get("initial")
    if stats is None:
        raise MissingLabels("tuning corpus has no initial hallucinated tokens")
    sd = stats.stderr * math.sqrt(stats.count)
    rng = np.random.default_rng(grid.seed)
    low, high = max(0.0, stats.mean - sd), stats.mean + sd
    taus = rng.uniform(low, high, size=grid.tau_samples)
    return tuple(sorted(float(t) for t in taus))


def _avg_initial_logprob(reference_steps, lam: float, tau: float) -> float:
    strategy = ScoreStrategy.cpmi(lam, tau)
    values = []
    for cond, marg, token_id, label in reference_steps:
        if label != TokenLabel.HALLUCINATED_INITIAL:
            continue
        vec = step_vector(strategy, cond, marg)
        values.append(float(normalized_step_logprobs(vec, cond)[token_id]))
    if not values:
        raise MissingLabels("tuning corpus has no initial hallucinated tokens")
    return math.fsum(values) / len(values)


def _csv_rows(trials: list[TrialResult], with_objective: bool) -> list[str]:
    rows = [CSV_HEADER]
    for t in trials:
        obj = repr(t.objective) if with_objective else ""
        rows.append(
            f"{t.lam!r},{t.tau!r},{t.rouge_l_mean!r},{t.avg_logprob_initial!r},{obj}"
        )
    return rows


def grid_search(
    corpus: Corpus,
    cond_model: ConditionalModel,
    marg_model: MarginalModel,
    grid: GridSpec,
    k: int = 5,
    n_max: int = 32,
    workers: int = 1,
    csv_path: str | Path | None = None,
) -> SweepResult:
    """One TrialResult per (lambda, tau) pair, in grid order.

    Deterministic for a fixed GridSpec and seed. A failing trial aborts the
    sweep: completed rows are still written, with the objective column empty
    and a trailing '# invalid' marker, then SweepAborted is raised.
    """
    taus = grid.taus if grid.taus is not None else sample_taus(corpus, cond_model, grid)
    for doc in corpus.documents:
        if doc.labels is None:
            raise MissingLabels(f"document {doc.id!r} has no token labels")

    def collect_reference_steps():
        # Reference-step distributions do not depend on (lambda, tau).
        steps = []
        for doc in corpus.documents:
            prefix = doc.reference.ids[:1]
            for token_id, label in zip(doc.reference.ids[1:-1], doc.labels):
                seq_prefix = Sequence(prefix)
                cond = cond_model.next_dist(doc.source, seq_prefix)
                marg = marg_model.next_dist(seq_prefix)
                steps.append((cond, marg, token_id, label))
                prefix = prefix + (token_id,)
        return steps

    reference_steps: list | None = None
    raw: list[TrialResult] = []
    pairs = [(lam, tau) for lam in grid.lambdas for tau in taus]
    for lam, tau in pairs:
        try:
            if reference_steps is None:
                reference_steps = collect_reference_steps()
            decode = decode_corpus(
                ScoreStrategy.cpmi(lam, tau),
                cond_model,
                marg_model,
                corpus,
                k=k,
                n_max=n_max,
                workers=workers,
            )
            if decode.failed:
                doc_id, msg = decode.failed[0]
                raise RuntimeError(f"decoding {doc_id!r} failed: {msg}")
            decoded = {doc_id: res.best.seq for doc_id, res in decode.succeeded}
            rouge = mean_rouge_f1(corpus_rouge(decoded, corpus))
            avg_lp = _avg_initial_logprob(reference_steps, lam, tau)
            raw.append(TrialResult(lam, tau, rouge, avg_lp))
        except Exception as exc:
            if csv_path is not None:
                rows = _csv_rows(raw, with_objective=False)
                rows.append(f"# invalid: trial lambda={lam} tau={tau} aborted the sweep")
                Path(csv_path).write_text("\n".join(rows) + "\n", encoding="utf-8")
            raise SweepAborted(lam, tau, exc) from exc

    normalizers = Normalizers(
        rouge_min=min(t.rouge_l_mean for t in raw),
        rouge_max=max(t.rouge_l_mean for t in raw),
        neg_logprob_min=min(-t.avg_logprob_initial for t in raw),
        neg_logprob_max=max(-t.avg_logprob_initial for t in raw),
    )
    trials = [
        TrialResult(
            t.lam,
            t.tau,
            t.rouge_l_mean,
            t.avg_logprob_initial,
            tuning_objective(t.rouge_l_mean, t.avg_logprob_initial, grid, normalizers),
        )
        for t in raw
    ]

    best = trials[0]
    for t in trials[1:]:
        if t.objective > best.objective or (
            t.objective == best.objective and (t.lam, t.tau) < (best.lam, best.tau)
        ):
            best = t

    if csv_path is not None:
        Path(csv_path).write_text(
            "\n".join(_csv_rows(trials, with_objective=True)) + "\n", encoding="utf-8"
        )
    return SweepResult(best_lambda=best.lam, best_tau=best.tau, trials=tuple(trials))
