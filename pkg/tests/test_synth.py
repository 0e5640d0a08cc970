import json

import numpy as np
import pytest

from cpmidec.corpus import TokenLabel, load_corpus
from cpmidec.models import StepTableWorld, load_world
from cpmidec.scoring import shannon_entropy
from cpmidec.synth import DEFAULT_SEED, SynthConfig, generate_benchmark, main


@pytest.fixture(scope="module")
def bench():
    return generate_benchmark(SynthConfig(n_docs=40, seed=DEFAULT_SEED))


@pytest.fixture(scope="module")
def full_bench():
    return generate_benchmark(SynthConfig())


class TestGenerator:
    def test_counts(self, bench):
        assert len(bench.corpus) == 40
        assert len(bench.designated) == 80  # two designated steps per document
        assert all(d.labels is not None for d in bench.corpus.documents)

    def test_designated_entropy_floor(self, bench):
        assert all(d.entropy >= 3.0 for d in bench.designated)

    def test_distractor_is_argmax_at_designated_steps(self, bench):
        by_doc = {d.id: i for i, d in enumerate(bench.corpus.documents)}
        for d in bench.designated:
            row = bench.world.step_rows[by_doc[d.doc_id]][d.content_index]
            assert int(np.argmax(row.log_probs)) == bench.distractor_id

    def test_steady_steps_are_low_entropy(self, bench):
        designated = {(d.doc_id, d.content_index) for d in bench.designated}
        for i, doc in enumerate(bench.corpus.documents):
            for j in range(12):
                if (doc.id, j) in designated:
                    continue
                h = shannon_entropy(bench.world.step_rows[i][j])
                assert h < 2.5

    def test_labels_follow_designated_plan(self, bench):
        labeled = {(d.doc_id, d.content_index): d.reference_is_distractor for d in bench.designated}
        for doc in bench.corpus.documents:
            for j, lab in enumerate(doc.labels):
                if lab == TokenLabel.HALLUCINATED_INITIAL:
                    assert labeled[(doc.id, j)] is True
                    assert doc.reference.ids[1 + j] == bench.distractor_id

    def test_deterministic(self):
        a = generate_benchmark(SynthConfig(n_docs=10, seed=4))
        b = generate_benchmark(SynthConfig(n_docs=10, seed=4))
        assert [d.reference.ids for d in a.corpus.documents] == [
            d.reference.ids for d in b.corpus.documents
        ]
        assert a.designated == b.designated

    def test_marginal_prefers_distractor_over_faithful(self, full_bench):
        # the flip margin: at designated steps the distractor's marginal
        # must exceed the faithful topic token's by a clear ratio
        from cpmidec.corpus import Sequence

        bench = full_bench
        by_doc = {d.id: i for i, d in enumerate(bench.corpus.documents)}
        ratios = []
        for d in bench.designated:
            idx = by_doc[d.doc_id]
            doc = bench.corpus.documents[idx]
            prefix = Sequence(doc.reference.ids[: 1 + d.content_index])
            probs = np.exp(bench.world.marginal_dist(prefix).log_probs)
            row = bench.world.step_rows[idx][d.content_index].log_probs
            faithful = int(np.argsort(row)[-2])  # runner-up under the conditional
            ratios.append(probs[bench.distractor_id] / probs[faithful])
        ratios = np.array(ratios)
        assert ratios.min() > 1.5
        assert np.median(ratios) > 4.0


class TestFilesRoundTrip:
    def test_main_writes_loadable_files(self, tmp_path):
        rc = main(["--out-dir", str(tmp_path), "--seed", "11", "--docs", "8"])
        assert rc == 0
        world = load_world(tmp_path / "world.json")
        assert isinstance(world, StepTableWorld)
        corpus = load_corpus(tmp_path / "corpus.jsonl", world.vocabulary)
        assert len(corpus) == 8
        meta = json.loads((tmp_path / "designated.json").read_text())
        assert meta["seed"] == 11 and len(meta["steps"]) == 16
        # corpus sources must be the world's sources, in order
        assert [d.source.ids for d in corpus.documents] == [s.ids for s in world.sources]
        # labels survive the span round trip
        original = generate_benchmark(SynthConfig(n_docs=8, seed=11))
        assert [d.labels for d in corpus.documents] == [
            d.labels for d in original.corpus.documents
        ]
