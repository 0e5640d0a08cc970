"""Beam-search decoding with entropy-gated PMI scoring and evaluation."""

from .corpus import (
    Corpus,
    LabeledDocument,
    Sequence,
    SpanAnnotation,
    TokenLabel,
    Vocabulary,
    build_vocab,
    decode_text,
    encode_text,
    load_corpus,
    spans_to_token_labels,
    write_corpus,
)
from .decoder import DecodeResult, Hypothesis, beam_search, decode_corpus, exhaustive_argmax
from .evaluate import (
    DeltaReport,
    EntropyReport,
    RougeLScore,
    delta_by_label,
    entropy_by_label,
    factscore_mean,
    rouge_l,
)
from .models import (
    CopyMixtureModel,
    Distribution,
    NGramLM,
    StepTableWorld,
    TableWorld,
    exact_marginal_dist,
    load_world,
    save_world,
    train_ngram,
)
from .scoring import ScoreStrategy, StepScore, score_sequence, shannon_entropy, step_score, token_rank
from .tuner import PRESETS, GridSpec, SweepResult, TrialResult, grid_search

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
