import json

import pytest
from hypothesis import given, strategies as st

from cpmidec.corpus import (
    Corpus,
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
from cpmidec.errors import EmptyCorpus, InvalidSpan, ParseError, ReservedToken, UnknownToken

N = TokenLabel.NON_HALLUCINATED
I = TokenLabel.HALLUCINATED_INITIAL
S = TokenLabel.HALLUCINATED_SUBSEQUENT


class TestBuildVocab:
    def test_ordering_is_bos_eos_then_first_appearance(self):
        vocab = build_vocab([("a b", "b c")])
        assert vocab.tokens == ("<bos>", "<eos>", "a", "b", "c")
        assert (vocab.bos_id, vocab.eos_id) == (0, 1)

    def test_empty_input(self):
        with pytest.raises(EmptyCorpus):
            build_vocab([])

    def test_deduplication(self):
        assert build_vocab([("x x", "x")]).tokens == ("<bos>", "<eos>", "x")

    def test_lowercasing(self):
        assert build_vocab([("A a", "a")]).tokens == ("<bos>", "<eos>", "a")

    def test_reserved_marker_rejected(self):
        with pytest.raises(ReservedToken):
            build_vocab([("<bos> a", "a")])


class TestEncodeText:
    def setup_method(self):
        self.vocab = build_vocab([("a b", "c")])

    def test_complete(self):
        assert encode_text("a b", self.vocab, as_complete=True).ids == (0, 2, 3, 1)

    def test_empty_string(self):
        assert encode_text("", self.vocab, as_complete=True).ids == (0, 1)

    def test_prefix_form(self):
        seq = encode_text("a", self.vocab)
        assert seq.ids == (0, 2)
        assert seq.is_prefix(self.vocab) and not seq.is_complete(self.vocab)

    def test_unknown_token(self):
        with pytest.raises(UnknownToken) as err:
            encode_text("z", self.vocab)
        assert err.value.token == "z"

    @given(st.lists(st.sampled_from(["a", "b", "c"]), max_size=8))
    def test_round_trip(self, words):
        text = " ".join(words)
        assert decode_text(encode_text(text, self.vocab, as_complete=True), self.vocab) == text


class TestSpanLabels:
    def test_single_span(self):
        assert spans_to_token_labels(5, [SpanAnnotation(2, 4)]) == (N, N, I, S, N)

    def test_adjacent_spans_merge(self):
        got = spans_to_token_labels(3, [SpanAnnotation(0, 1), SpanAnnotation(1, 3)])
        assert got == (I, S, S)

    def test_out_of_bounds(self):
        with pytest.raises(InvalidSpan):
            spans_to_token_labels(2, [SpanAnnotation(1, 5)])

    def test_no_spans(self):
        assert spans_to_token_labels(3, []) == (N, N, N)

    @given(
        st.integers(min_value=1, max_value=12).flatmap(
            lambda n: st.tuples(
                st.just(n),
                st.lists(
                    st.tuples(st.integers(0, n - 1), st.integers(1, n)).map(
                        lambda p: SpanAnnotation(min(p[0], p[1] - 1), max(p[0] + 1, p[1]))
                    ),
                    max_size=4,
                ),
            )
        )
    )
    def test_initial_count_equals_maximal_runs(self, case):
        n, spans = case
        labels = spans_to_token_labels(n, spans)
        assert len(labels) == n
        # count maximal runs directly from the labeled sequence
        runs = sum(
            1
            for i, lab in enumerate(labels)
            if lab != N and (i == 0 or labels[i - 1] == N)
        )
        assert sum(1 for lab in labels if lab == I) == runs
        # Initial appears exactly at run starts
        for i, lab in enumerate(labels):
            if lab == I:
                assert i == 0 or labels[i - 1] == N


class TestLoadCorpus:
    def test_load_and_labels(self, tmp_path):
        lines = [
            {"id": "d0", "source": "a b", "reference": "a b c d"},
            {
                "id": "d1",
                "source": "c d",
                "reference": "c d a b",
                "spans": [{"begin_token": 1, "end_token": 2}],
            },
        ]
        path = tmp_path / "corpus.jsonl"
        path.write_text("\n".join(json.dumps(l) for l in lines), encoding="utf-8")
        corpus = load_corpus(path)
        assert len(corpus) == 2
        assert corpus.documents[0].labels is None
        assert corpus.documents[1].labels == (N, I, N, N)

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "d0", "source": "a", "reference": "a"}\n{"truncated', "utf-8")
        with pytest.raises(ParseError) as err:
            load_corpus(path)
        assert err.value.line == 2

    def test_duplicate_id(self, tmp_path):
        record = json.dumps({"id": "d0", "source": "a", "reference": "a"})
        path = tmp_path / "dup.jsonl"
        path.write_text(record + "\n" + record, "utf-8")
        with pytest.raises(ParseError):
            load_corpus(path)

    def test_deterministic(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps({"id": "d", "source": "a b", "reference": "b a"}), "utf-8")
        c1, c2 = load_corpus(path), load_corpus(path)
        assert c1.vocabulary == c2.vocabulary
        assert c1.documents == c2.documents

    def test_write_read_round_trip(self, tmp_path):
        from cpmidec.corpus import LabeledDocument

        vocab = build_vocab([("a b c", "a b c")])
        doc_ref = encode_text("a b c", vocab, as_complete=True)
        corpus = Corpus(
            (
                LabeledDocument(
                    "d0",
                    encode_text("a b", vocab),
                    doc_ref,
                    spans_to_token_labels(3, [SpanAnnotation(0, 2)]),
                ),
            ),
            vocab,
        )
        path = tmp_path / "rt.jsonl"
        write_corpus(corpus, path)
        back = load_corpus(path)
        assert back.documents[0].labels == (I, S, N)
        assert back.documents[0].reference.ids == doc_ref.ids


class TestSequence:
    def test_complete_invariants(self):
        vocab = build_vocab([("a", "a")])
        assert Sequence((0, 2, 1)).is_complete(vocab)
        assert not Sequence((0, 1, 2)).is_complete(vocab)
        assert not Sequence((0, 2)).is_complete(vocab)
        assert Sequence((0, 2)).is_prefix(vocab)
        assert not Sequence((0, 2, 1)).is_prefix(vocab)

    def test_vocabulary_validation(self):
        with pytest.raises(ValueError):
            Vocabulary(("<bos>", "<eos>"))
        with pytest.raises(ValueError):
            Vocabulary(("<bos>", "<eos>", "a"), bos_id=0, eos_id=0)
