"""Corpus analyses: ROUGE-L, score/rank deltas by hallucination label,
entropy by label, and the label-mean factuality score.

Delta analysis contrasts plain log-probability scoring with the gated PMI
objective on reference tokens. Reported step scores are the normalized
log-probabilities induced by the gated score vector (its log-softmax);
the raw gated scores grow with lambda for every token of nonzero marginal
probability, so only the normalized form can express "this token lost
probability to the rest of the vocabulary", which is what the per-label
deltas and the tuner need. Ranks are identical under both forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .corpus import Corpus, LabeledDocument, Sequence, TokenLabel, Vocabulary
from .errors import MissingLabels
from .models import ConditionalModel, MarginalModel, require_same_vocab
from .scoring import (
    ScoreStrategy,
    normalized_step_logprobs,
    rank_in_scores,
    shannon_entropy,
    step_vector,
)

CATEGORY_ORDER = ("non_hallucinated", "hallucinated", "initial", "subsequent")

_LABEL_TO_CATEGORY = {
    TokenLabel.NON_HALLUCINATED: "non_hallucinated",
    TokenLabel.HALLUCINATED_INITIAL: "initial",
    TokenLabel.HALLUCINATED_SUBSEQUENT: "subsequent",
}


@dataclass(frozen=True)
class RougeLScore:
    precision: float
    recall: float
    f1: float


def rouge_l(candidate: Sequence, reference: Sequence, vocab: Vocabulary) -> RougeLScore:
    """LCS-based overlap of content tokens; F1 = 2PR/(P+R), zero when P+R=0."""
    cand = np.array(candidate.content(vocab), dtype=np.int64)
    ref = np.array(reference.content(vocab), dtype=np.int64)
    if cand.size == 0 or ref.size == 0:
        return RougeLScore(0.0, 0.0, 0.0)
    lcs = _kernels.lcs_length(cand, ref)
    p = lcs / cand.size
    r = lcs / ref.size
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return RougeLScore(p, r, f1)


@dataclass(frozen=True)
class CategoryStats:
    mean: float
    stderr: float
    count: int


def _stats(values: list[float]) -> CategoryStats:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return CategoryStats(mean, 0.0, n)
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return CategoryStats(mean, math.sqrt(var) / math.sqrt(n), n)


def _aggregate(per_label: dict[str, list[float]]) -> dict[str, CategoryStats]:
    merged = dict(per_label)
    merged["hallucinated"] = per_label["initial"] + per_label["subsequent"]
    return {
        cat: _stats(vals)
        for cat in CATEGORY_ORDER
        if (vals := merged.get(cat))
    }


@dataclass(frozen=True)
class DeltaReport:
    """Per-category mean +/- stderr of score and rank changes."""

    delta_score: dict[str, CategoryStats]
    delta_rank: dict[str, CategoryStats]


@dataclass(frozen=True)
class EntropyReport:
    entropy: dict[str, CategoryStats]


def _labeled_docs(corpus: Corpus) -> tuple[LabeledDocument, ...]:
    unlabeled = [d.id for d in corpus.documents if d.labels is None]
    if unlabeled:
        raise MissingLabels(f"documents without token labels: {unlabeled[:5]}")
    if not corpus.documents:
        raise MissingLabels("corpus is empty")
    return corpus.documents


def _reference_steps(doc: LabeledDocument, vocab: Vocabulary):
    """(prefix, token, label) for each labeled content token of the reference."""
    assert doc.labels is not None
    prefix = Sequence(doc.reference.ids[:1])
    content = doc.reference.ids[1:-1]
    for token_id, label in zip(content, doc.labels):
        yield prefix, token_id, label
        prefix = prefix.extended(token_id)


def delta_by_label(
    corpus: Corpus,
    cond_model: ConditionalModel,
    marg_model: MarginalModel,
    lam: float,
    tau: float,
) -> DeltaReport:
    """Change in normalized token score and in rank when the gated PMI
    objective replaces plain log-probability, grouped by token label."""
    docs = _labeled_docs(corpus)
    vocab = cond_model.vocabulary
    require_same_vocab(corpus.vocabulary, vocab)
    require_same_vocab(vocab, marg_model.vocabulary)
    strategy = ScoreStrategy.cpmi(lam, tau)

    d_score: dict[str, list[float]] = {c: [] for c in _LABEL_TO_CATEGORY.values()}
    d_rank: dict[str, list[float]] = {c: [] for c in _LABEL_TO_CATEGORY.values()}
    for doc in docs:
        for prefix, token_id, label in _reference_steps(doc, vocab):
            cond = cond_model.next_dist(doc.source, prefix)
            marg = marg_model.next_dist(prefix)
            vec = step_vector(strategy, cond, marg)
            gated_logprobs = normalized_step_logprobs(vec, cond)
            cat = _LABEL_TO_CATEGORY[label]
            d_score[cat].append(
                float(gated_logprobs[token_id]) - float(cond.log_probs[token_id])
            )
            d_rank[cat].append(
                rank_in_scores(vec.scores, token_id)
                - _kernels.rank(cond.log_probs, token_id)
            )
    return DeltaReport(delta_score=_aggregate(d_score), delta_rank=_aggregate(d_rank))


def entropy_by_label(corpus: Corpus, cond_model: ConditionalModel) -> EntropyReport:
    """Mean +/- stderr of conditional next-token entropy at reference tokens,
    grouped by label. Entropy does not depend on the scoring strategy."""
    docs = _labeled_docs(corpus)
    vocab = cond_model.vocabulary
    require_same_vocab(corpus.vocabulary, vocab)
    values: dict[str, list[float]] = {c: [] for c in _LABEL_TO_CATEGORY.values()}
    for doc in docs:
        for prefix, _token_id, label in _reference_steps(doc, vocab):
            h = shannon_entropy(cond_model.next_dist(doc.source, prefix))
            values[_LABEL_TO_CATEGORY[label]].append(h)
    return EntropyReport(entropy=_aggregate(values))


def factscore_mean(corpus: Corpus, micro: bool = False) -> float:
    """Mean fraction of non-hallucinated reference tokens.

    Macro (default) averages per-document fractions; micro pools tokens.
    Documents without content tokens are skipped.
    """
    docs = _labeled_docs(corpus)
    fractions: list[float] = []
    good = 0
    total = 0
    for doc in docs:
        labels = doc.labels or ()
        if not labels:
            continue
        ok = sum(1 for lab in labels if lab == TokenLabel.NON_HALLUCINATED)
        fractions.append(ok / len(labels))
        good += ok
        total += len(labels)
    if not fractions:
        raise MissingLabels("no documents with content tokens to score")
    if micro:
        return good / total
    return math.fsum(fractions) / len(fractions)


def corpus_rouge(
    decoded: dict[str, Sequence], corpus: Corpus
) -> dict[str, RougeLScore]:
    """ROUGE-L of each decoded sequence against its document's reference."""
    vocab = corpus.vocabulary
    out = {}
    for doc in corpus.documents:
        if doc.id in decoded:
            out[doc.id] = rouge_l(decoded[doc.id], doc.reference, vocab)
    return out


def mean_rouge_f1(scores: dict[str, RougeLScore]) -> float:
    if not scores:
        return 0.0
    return math.fsum(s.f1 for s in scores.values()) / len(scores)


# -- report rendering ---------------------------------------------------------

_DISPLAY = {
    "non_hallucinated": "Non-Hallucinated",
    "hallucinated": "Hallucinated",
    "initial": "  Initial",
    "subsequent": "  Subsequent",
}


def report_csv_rows(
    report: DeltaReport | EntropyReport,
) -> list[tuple[str, str, float, float, int]]:
    """Rows of (category, metric, mean, stderr, count)."""
    metrics: list[tuple[str, dict[str, CategoryStats]]]
    if isinstance(report, DeltaReport):
        metrics = [("delta_score", report.delta_score), ("delta_rank", report.delta_rank)]
    else:
        metrics = [("entropy", report.entropy)]
    rows = []
    for cat in CATEGORY_ORDER:
        for name, table in metrics:
            if cat in table:
                st = table[cat]
                rows.append((cat, name, st.mean, st.stderr, st.count))
    return rows


def report_text(report: DeltaReport | EntropyReport) -> str:
    if isinstance(report, DeltaReport):
        header = f"{'Token label':<18} {'d-score':>18} {'d-rank':>18} {'count':>8}"
        lines = [header, "-" * len(header)]
        for cat in CATEGORY_ORDER:
            if cat not in report.delta_score:
                continue
            s = report.delta_score[cat]
            r = report.delta_rank[cat]
            lines.append(
                f"{_DISPLAY[cat]:<18} "
                f"{s.mean:>10.4f}±{s.stderr:<7.4f} "
                f"{r.mean:>10.2f}±{r.stderr:<7.2f} "
                f"{s.count:>8d}"
            )
    else:
        header = f"{'Token label':<18} {'entropy':>18} {'count':>8}"
        lines = [header, "-" * len(header)]
        for cat in CATEGORY_ORDER:
            if cat not in report.entropy:
                continue
            e = report.entropy[cat]
            lines.append(
                f"{_DISPLAY[cat]:<18} {e.mean:>10.4f}±{e.stderr:<7.4f} {e.count:>8d}"
            )
    return "\n".join(lines)
