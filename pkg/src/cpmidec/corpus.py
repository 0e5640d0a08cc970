"""Token/vocabulary primitives, corpus files, and span-to-token labels.

Text is lowercased and split on whitespace against a closed vocabulary;
unknown tokens are hard errors so that score and rank evaluations can
never be silently corrupted by an UNK remapping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import (
    EmptyCorpus,
    InvalidSpan,
    ParseError,
    ReservedToken,
    UnknownToken,
)

BOS_MARK = "<bos>"
EOS_MARK = "<eos>"


@dataclass(frozen=True)
class Vocabulary:
    """Integer-coded token space with reserved begin/end markers."""

    tokens: tuple[str, ...]
    bos_id: int = 0
    eos_id: int = 1

    def __post_init__(self) -> None:
        if len(self.tokens) < 3:
            raise ValueError("vocabulary needs BOS, EOS and at least one content token")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate surface strings in vocabulary")
        n = len(self.tokens)
        if not (0 <= self.bos_id < n and 0 <= self.eos_id < n):
            raise ValueError("BOS/EOS ids out of range")
        if self.bos_id == self.eos_id:
            raise ValueError("BOS and EOS must be distinct")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def index(self) -> dict[str, int]:
        try:
            return object.__getattribute__(self, "_index")
        except AttributeError:
            idx = {tok: i for i, tok in enumerate(self.tokens)}
            object.__setattr__(self, "_index", idx)
            return idx

    def id_of(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise UnknownToken(token) from None

    def surface(self, token_id: int) -> str:
        return self.tokens[token_id]

    def content_ids(self) -> tuple[int, ...]:
        """All ids except BOS; what a decoder may append (EOS included)."""
        return tuple(i for i in range(len(self.tokens)) if i != self.bos_id)

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens), "bos": self.bos_id, "eos": self.eos_id}

    @classmethod
    def from_dict(cls, payload: dict) -> "Vocabulary":
        return cls(tuple(payload["tokens"]), int(payload["bos"]), int(payload["eos"]))


@dataclass(frozen=True)
class Sequence:
    """Immutable id sequence; prefix-form or complete, see the validators."""

    ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)

    def is_prefix(self, vocab: Vocabulary) -> bool:
        ids = self.ids
        return (
            len(ids) >= 1
            and ids[0] == vocab.bos_id
            and vocab.bos_id not in ids[1:]
            and vocab.eos_id not in ids
        )

    def is_complete(self, vocab: Vocabulary) -> bool:
        ids = self.ids
        return (
            len(ids) >= 2
            and ids[0] == vocab.bos_id
            and ids[-1] == vocab.eos_id
            and vocab.bos_id not in ids[1:]
            and vocab.eos_id not in ids[:-1]
        )

    def content(self, vocab: Vocabulary) -> tuple[int, ...]:
        """Ids with BOS/EOS stripped."""
        return tuple(i for i in self.ids if i not in (vocab.bos_id, vocab.eos_id))

    def extended(self, token_id: int) -> "Sequence":
        return Sequence(self.ids + (token_id,))


class TokenLabel(Enum):
    NON_HALLUCINATED = "non_hallucinated"
    HALLUCINATED_INITIAL = "hallucinated_initial"
    HALLUCINATED_SUBSEQUENT = "hallucinated_subsequent"


@dataclass(frozen=True)
class SpanAnnotation:
    """Half-open [begin_token, end_token) over reference content tokens."""

    begin_token: int
    end_token: int


@dataclass(frozen=True)
class LabeledDocument:
    id: str
    source: Sequence
    reference: Sequence
    labels: tuple[TokenLabel, ...] | None = None


@dataclass(frozen=True)
class Corpus:
    documents: tuple[LabeledDocument, ...]
    vocabulary: Vocabulary

    def __len__(self) -> int:
        return len(self.documents)

    def labeled_documents(self) -> tuple[LabeledDocument, ...]:
        return tuple(d for d in self.documents if d.labels is not None)


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def build_vocab(raw_documents: Iterable[tuple[str, str]]) -> Vocabulary:
    """Vocabulary over every token of every (source, reference) pair.

    Ordering is deterministic: BOS=0, EOS=1, then content tokens by first
    appearance scanning source before reference, document by document.
    """
    tokens: list[str] = [BOS_MARK, EOS_MARK]
    seen = set(tokens)
    n_docs = 0
    for source, reference in raw_documents:
        n_docs += 1
        for text in (source, reference):
            for tok in tokenize(text):
                if tok in (BOS_MARK, EOS_MARK):
                    raise ReservedToken(tok)
                if tok not in seen:
                    seen.add(tok)
                    tokens.append(tok)
    if n_docs == 0:
        raise EmptyCorpus("no documents to build a vocabulary from")
    return Vocabulary(tuple(tokens), bos_id=0, eos_id=1)


def encode_text(text: str, vocab: Vocabulary, as_complete: bool = False) -> Sequence:
    """BOS-prefixed id sequence; EOS appended iff as_complete."""
    ids = [vocab.bos_id]
    for tok in tokenize(text):
        if tok in (BOS_MARK, EOS_MARK):
            raise ReservedToken(tok)
        ids.append(vocab.id_of(tok))
    if as_complete:
        ids.append(vocab.eos_id)
    return Sequence(tuple(ids))


def decode_text(seq: Sequence, vocab: Vocabulary) -> str:
    return " ".join(vocab.surface(i) for i in seq.content(vocab))


def merge_spans(spans: Iterable[SpanAnnotation]) -> list[SpanAnnotation]:
    """Collapse overlapping or adjacent spans into maximal runs."""
    merged: list[SpanAnnotation] = []
    for span in sorted(spans, key=lambda s: (s.begin_token, s.end_token)):
        if merged and span.begin_token <= merged[-1].end_token:
            last = merged.pop()
            merged.append(SpanAnnotation(last.begin_token, max(last.end_token, span.end_token)))
        else:
            merged.append(span)
    return merged


def spans_to_token_labels(
    reference_length: int, spans: Iterable[SpanAnnotation]
) -> tuple[TokenLabel, ...]:
    """Per-token labels; the first token of each maximal run is Initial."""
    spans = list(spans)
    for span in spans:
        if not (0 <= span.begin_token < span.end_token <= reference_length):
            raise InvalidSpan(
                f"span [{span.begin_token}, {span.end_token}) outside reference of "
                f"length {reference_length}"
            )
    labels = [TokenLabel.NON_HALLUCINATED] * reference_length
    for run in merge_spans(spans):
        labels[run.begin_token] = TokenLabel.HALLUCINATED_INITIAL
        for i in range(run.begin_token + 1, run.end_token):
            labels[i] = TokenLabel.HALLUCINATED_SUBSEQUENT
    return tuple(labels)


def _parse_record(line_no: int, line: str) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(line_no, f"invalid JSON ({exc.msg})") from None
    if not isinstance(record, dict):
        raise ParseError(line_no, "record is not a JSON object")
    for field in ("id", "source", "reference"):
        if not isinstance(record.get(field), str):
            raise ParseError(line_no, f"missing or non-string field {field!r}")
    if "spans" in record and not isinstance(record["spans"], list):
        raise ParseError(line_no, "field 'spans' must be an array")
    return record


def load_corpus(path: str | Path, vocab: Vocabulary | None = None) -> Corpus:
    """Read a newline-JSON corpus file; builds a vocabulary when none given.

    Each line: {"id", "source", "reference", "spans"?} with spans as
    [{"begin_token": int, "end_token": int}, ...] over reference content
    tokens. A present-but-empty spans list means annotated as fully faithful;
    an absent spans field means unannotated (labels None).
    """
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    records: list[tuple[int, dict]] = []
    for line_no, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        records.append((line_no, _parse_record(line_no, line)))
    if not records:
        raise EmptyCorpus(f"no records in {path}")

    if vocab is None:
        vocab = build_vocab((r["source"], r["reference"]) for _, r in records)

    documents: list[LabeledDocument] = []
    seen_ids: set[str] = set()
    for line_no, record in records:
        doc_id = record["id"]
        if doc_id in seen_ids:
            raise ParseError(line_no, f"duplicate document id {doc_id!r}")
        seen_ids.add(doc_id)
        source = encode_text(record["source"], vocab, as_complete=False)
        reference = encode_text(record["reference"], vocab, as_complete=True)
        labels: tuple[TokenLabel, ...] | None = None
        if "spans" in record:
            try:
                spans = [
                    SpanAnnotation(int(s["begin_token"]), int(s["end_token"]))
                    for s in record["spans"]
                ]
            except (TypeError, KeyError, ValueError):
                raise ParseError(line_no, "malformed span object") from None
            try:
                labels = spans_to_token_labels(len(reference.content(vocab)), spans)
            except InvalidSpan as exc:
                raise ParseError(line_no, str(exc)) from None
        documents.append(LabeledDocument(doc_id, source, reference, labels))
    return Corpus(tuple(documents), vocab)


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    """Inverse of load_corpus for generated corpora."""
    vocab = corpus.vocabulary
    lines = []
    for doc in corpus.documents:
        record: dict = {
            "id": doc.id,
            "source": decode_text(doc.source, vocab),
            "reference": decode_text(doc.reference, vocab),
        }
        if doc.labels is not None:
            spans = []
            start = None
            for i, lab in enumerate(doc.labels + (TokenLabel.NON_HALLUCINATED,)):
                if lab == TokenLabel.HALLUCINATED_INITIAL:
                    if start is not None:
                        spans.append({"begin_token": start, "end_token": i})
                    start = i
                elif lab == TokenLabel.NON_HALLUCINATED and start is not None:
                    spans.append({"begin_token": start, "end_token": i})
                    start = None
            record["spans"] = spans
        lines.append(json.dumps(record, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
