"""Acceptance suite: one test per criterion, each printing a PASS line
(run with -s to see them; failures surface as ordinary assertions).

Timed criteria measure their own work; JIT compilation happens once in the
session-level warmup fixture before any timer starts.
"""

import functools
import json
import math
import shutil
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from cpmidec.corpus import Sequence, Vocabulary, load_corpus
from cpmidec.decoder import beam_search, decode_corpus, exhaustive_argmax
from cpmidec.evaluate import corpus_rouge, delta_by_label, mean_rouge_f1, rouge_l
from cpmidec.models import Distribution, exact_marginal_dist, load_world
from cpmidec.scoring import ScoreStrategy, shannon_entropy
from cpmidec.synth import SynthConfig, count_distractor_picks, generate_benchmark
from cpmidec.tuner import GridSpec, grid_search
from helpers import random_table_world

REPO = Path(__file__).resolve().parent.parent


@contextmanager
def criterion(name: str):
    started = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"FAIL: {name}")
        raise
    print(f"PASS: {name} ({time.perf_counter() - started:.2f}s)")


@pytest.fixture(scope="module")
def bench():
    return generate_benchmark(SynthConfig())


@pytest.fixture(scope="module")
def tuned(bench):
    grid = GridSpec(lambdas=(0.2, 0.4, 0.6), taus=(3.2, 3.8, 4.4), seed=613)
    result = grid_search(
        bench.corpus,
        bench.world.conditional,
        bench.world.marginal,
        grid,
        k=5,
        n_max=14,
    )
    return result


def _trace_key(hyp):
    return [(s.token, s.cond_logp, s.entropy, s.score) for s in hyp.trace]


def test_degeneracy_identities():
    with criterion("degeneracy identities on 100 random table worlds") as _:
        start = time.perf_counter()
        rng = np.random.default_rng(2024)
        for i in range(100):
            w = random_table_world(
                rng, n_tokens=4 + i % 2, depth=3, n_sources=1 + i % 3
            )
            src = w.sources[i % len(w.sources)]
            lam = float(rng.uniform(0.1, 0.9))
            tau = float(rng.uniform(0.2, 1.5))
            base = beam_search(ScoreStrategy.logprob(), w, None, src, k=3, n_max=3)
            for strategy in (ScoreStrategy.cpmi(0.0, tau), ScoreStrategy.cpmi(lam, math.inf)):
                got = beam_search(strategy, w, w.marginal, src, k=3, n_max=3)
                assert got.best.seq.ids == base.best.seq.ids
                assert _trace_key(got.best) == _trace_key(base.best)
                assert [h.seq.ids for h in got.beam_final] == [
                    h.seq.ids for h in base.beam_final
                ]
            pmi = beam_search(ScoreStrategy.pmi(lam), w, w.marginal, src, k=3, n_max=3)
            cpmi0 = beam_search(ScoreStrategy.cpmi(lam, 0.0), w, w.marginal, src, k=3, n_max=3)
            assert pmi.best.seq.ids == cpmi0.best.seq.ids
            assert _trace_key(pmi.best) == _trace_key(cpmi0.best)
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"degeneracy run took {elapsed:.1f}s (limit 10s)"


def test_oracle_equivalence():
    with criterion("full-width beam equals exhaustive argmax on 50 worlds"):
        start = time.perf_counter()
        rng = np.random.default_rng(777)
        strategies = [
            ScoreStrategy.logprob(),
            ScoreStrategy.pmi(0.5),
            ScoreStrategy.cpmi(0.5, 1.2),
            ScoreStrategy.cpmi(0.3, 0.0),
        ]
        configs = [(4, 3), (5, 3), (4, 4), (5, 4)]
        for i in range(50):
            n_tokens, n_max = configs[i % len(configs)]
            w = random_table_world(rng, n_tokens=n_tokens, depth=n_max, n_sources=2)
            src = w.sources[i % 2]
            for strategy in strategies:
                marg = w.marginal if strategy.needs_marginal else None
                ex = exhaustive_argmax(strategy, w, marg, src, n_max)
                bs = beam_search(strategy, w, marg, src, k=n_tokens**n_max, n_max=n_max)
                assert bs.best.seq.ids == ex.seq.ids
                assert abs(bs.best.score - ex.score) <= 1e-9
        elapsed = time.perf_counter() - start
        assert elapsed < 30.0, f"oracle run took {elapsed:.1f}s (limit 30s)"


def test_entropy_checks():
    with criterion("entropy bounds: uniform, one-hot, and all decoding steps"):
        for n in (2, 3, 4, 5, 16, 64):
            uniform = Distribution.from_probs(np.ones(n))
            assert abs(shannon_entropy(uniform) - math.log(n)) <= 1e-9
            one_hot = Distribution.from_probs(np.eye(n)[0])
            assert shannon_entropy(one_hot) == 0.0
        rng = np.random.default_rng(55)
        for i in range(25):
            w = random_table_world(rng, n_tokens=4 + i % 2, depth=3)
            bound = math.log(len(w.vocabulary)) + 1e-12
            r = beam_search(
                ScoreStrategy.cpmi(0.4, 0.8), w, w.marginal, w.sources[0], k=3, n_max=3
            )
            assert r.stats.max_entropy <= bound
            for hyp in r.beam_final:
                for step in hyp.trace:
                    assert 0.0 <= step.entropy <= bound


def test_marginalization_and_bayes_consistency():
    with criterion("exact marginalization and PMI Bayes identity (1e-9)"):
        rng = np.random.default_rng(31415)
        for i in range(20):
            w = random_table_world(rng, n_tokens=4 + i % 2, depth=3, n_sources=2 + i % 3)
            # marginal equals the explicit prior-weighted source mixture
            for prefix_ids in list(w.rows[0])[:12]:
                prefix = Sequence(prefix_ids)
                got = np.exp(exact_marginal_dist(w, prefix).log_probs)
                want = np.zeros(len(w.vocabulary))
                for p, table in zip(w.prior, w.rows):
                    want += p * np.exp(table[prefix_ids].log_probs)
                assert np.max(np.abs(got - want)) <= 1e-9
            # PMI total == log p(y|x) - lambda * log p(y) from those marginals
            lam = float(rng.uniform(0.1, 1.0))
            src = w.sources[0]
            target = Sequence((0, 2, 3, 1))
            from cpmidec.scoring import score_sequence

            pmi_total = score_sequence(
                ScoreStrategy.pmi(lam), w, w.marginal, src, target
            ).total
            logp, logm = 0.0, 0.0
            prefix = (0,)
            for token in target.ids[1:]:
                logp += float(w.next_dist(src, Sequence(prefix)).log_probs[token])
                logm += float(exact_marginal_dist(w, Sequence(prefix)).log_probs[token])
                prefix += (token,)
            assert abs(pmi_total - (logp - lam * logm)) <= 1e-9


def test_synthetic_hallucination_benchmark(bench, tuned):
    with criterion("synthetic benchmark: distractor rates and ROUGE budget"):
        start = time.perf_counter()
        cond, marg = bench.world.conditional, bench.world.marginal

        plain = decode_corpus(ScoreStrategy.logprob(), cond, None, bench.corpus, k=5, n_max=14)
        assert plain.ok
        plain_map = dict(plain.succeeded)
        picked_plain, total = count_distractor_picks(plain_map, bench)
        assert total == len(bench.designated)
        assert picked_plain / total >= 0.60, f"plain beam picked {picked_plain}/{total}"

        strategy = ScoreStrategy.cpmi(tuned.best_lambda, tuned.best_tau)
        gated = decode_corpus(strategy, cond, marg, bench.corpus, k=5, n_max=14)
        assert gated.ok
        gated_map = dict(gated.succeeded)
        picked_gated, _ = count_distractor_picks(gated_map, bench)
        reduction = (picked_plain - picked_gated) / picked_plain
        assert reduction >= 0.50, f"distractor reduction only {reduction:.2%}"

        rouge_plain = mean_rouge_f1(
            corpus_rouge({d: r.best.seq for d, r in plain_map.items()}, bench.corpus)
        )
        rouge_gated = mean_rouge_f1(
            corpus_rouge({d: r.best.seq for d, r in gated_map.items()}, bench.corpus)
        )
        degradation = rouge_plain - rouge_gated
        assert degradation <= 0.01, f"ROUGE degraded by {degradation:.4f}"

        elapsed = time.perf_counter() - start
        assert elapsed < 120.0, f"benchmark took {elapsed:.1f}s (limit 120s)"
        print(
            f"  [beam {picked_plain}/{total} distractors, reduction {reduction:.1%}, "
            f"rouge {rouge_plain:.4f} -> {rouge_gated:.4f}]"
        )


def test_delta_analysis_direction(bench, tuned):
    with criterion("delta analysis direction at the tuned (lambda, tau)"):
        report = delta_by_label(
            bench.corpus,
            bench.world.conditional,
            bench.world.marginal,
            tuned.best_lambda,
            tuned.best_tau,
        )
        d_init = report.delta_score["initial"].mean
        d_non = report.delta_score["non_hallucinated"].mean
        r_init = report.delta_rank["initial"].mean
        r_non = report.delta_rank["non_hallucinated"].mean
        assert d_init < d_non, f"score delta ordering violated: {d_init} >= {d_non}"
        assert r_init > r_non, f"rank delta ordering violated: {r_init} <= {r_non}"


def test_rouge_matches_bruteforce_oracle():
    with criterion("ROUGE-L equals the LCS oracle on 1000 pairs + worked example"):

        def lcs_oracle(a: tuple, b: tuple) -> int:
            @functools.cache
            def f(i, j):
                if i == len(a) or j == len(b):
                    return 0
                if a[i] == b[j]:
                    return 1 + f(i + 1, j + 1)
                return max(f(i + 1, j), f(i, j + 1))

            return f(0, 0)

        vocab = Vocabulary(("<bos>", "<eos>", "t0", "t1", "t2", "t3", "t4"))
        rng = np.random.default_rng(424242)
        for _ in range(1000):
            la, lb = int(rng.integers(0, 13)), int(rng.integers(0, 13))
            xs = tuple(int(t) for t in rng.integers(2, 7, size=la))
            ys = tuple(int(t) for t in rng.integers(2, 7, size=lb))
            got = rouge_l(Sequence((0, *xs, 1)), Sequence((0, *ys, 1)), vocab)
            lcs = lcs_oracle(xs, ys)
            if not xs or not ys:
                assert got == got.__class__(0.0, 0.0, 0.0)
                continue
            p, r = lcs / len(xs), lcs / len(ys)
            f1 = 2 * p * r / (p + r) if p + r else 0.0
            assert (got.precision, got.recall, got.f1) == (p, r, f1)

        from cpmidec.corpus import build_vocab, encode_text

        v = build_vocab([("the cat sat", "the cat on the mat")])
        worked = rouge_l(
            encode_text("the cat sat", v, as_complete=True),
            encode_text("the cat on the mat", v, as_complete=True),
            v,
        )
        assert abs(worked.f1 - 0.5) <= 1e-12


def test_tuner_determinism(tmp_path):
    with criterion("tuner determinism and lambda=0 equals plain beam search"):
        small = generate_benchmark(SynthConfig(n_docs=24, seed=99))
        cond, marg = small.world.conditional, small.world.marginal
        grid = GridSpec(lambdas=(0.0, 0.4), taus=(3.2, 4.2), seed=17)
        paths = [tmp_path / "h1.csv", tmp_path / "h2.csv"]
        results = [
            grid_search(small.corpus, cond, marg, grid, k=5, n_max=14, csv_path=p)
            for p in paths
        ]
        assert paths[0].read_bytes() == paths[1].read_bytes()

        plain = decode_corpus(ScoreStrategy.logprob(), cond, None, small.corpus, k=5, n_max=14)
        plain_rouge = mean_rouge_f1(
            corpus_rouge({d: r.best.seq for d, r in plain.succeeded}, small.corpus)
        )
        lambda_zero_rows = [t for t in results[0].trials if t.lam == 0.0]
        assert lambda_zero_rows
        for trial in lambda_zero_rows:
            assert trial.rouge_l_mean == plain_rouge


# -- secondary component -------------------------------------------------------

SERVER_JS = REPO / "bridge-server" / "dist" / "src" / "main.js"
TOY_WORLD = REPO / "bridge-server" / "fixtures" / "toy-world.json"
TOY_CORPUS = REPO / "bridge-server" / "fixtures" / "toy-corpus.jsonl"
TRANSCRIPT = REPO / "bridge-server" / "fixtures" / "golden-transcript.jsonl"

needs_server = pytest.mark.skipif(
    not SERVER_JS.exists() or shutil.which("node") is None,
    reason="bridge server not built (run `npm install && npm run build` in bridge-server/)",
)


@needs_server
def test_secondary_bridge_conformance():
    with criterion("bridge conformance: transcript, 1000 requests, decode parity"):
        from cpmidec.bridge import BridgeModel, run_probe

        cmd = f"node {SERVER_JS} --model {TOY_WORLD} --mode conditional"
        corpus = load_corpus(TOY_CORPUS, load_world(TOY_WORLD).vocabulary)
        transcript = [
            json.loads(line)
            for line in TRANSCRIPT.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        with BridgeModel.spawn(cmd) as bridge:
            report = run_probe(
                bridge,
                n_requests=1000,
                seed=613,
                sources=[doc.source for doc in corpus.documents],
                transcript=transcript,
            )
        assert report.transcript_checked == len(transcript)
        assert report.transcript_mismatches == 0
        assert report.requests == 1000
        assert report.max_abs_logsumexp <= 1e-6
        assert report.passed, report.failures

        world = load_world(TOY_WORLD)
        with BridgeModel.spawn(cmd) as bridge:
            via_bridge = decode_corpus(
                ScoreStrategy.logprob(), bridge.conditional, None, corpus, k=3, n_max=4
            )
        builtin = decode_corpus(ScoreStrategy.logprob(), world.conditional, None, corpus, k=3, n_max=4)
        assert via_bridge.ok and builtin.ok
        for (da, ra), (db, rb) in zip(via_bridge.succeeded, builtin.succeeded):
            assert da == db
            assert ra.best.seq.ids == rb.best.seq.ids, f"decode mismatch on {da}"
        print("  [bridge decode matches builtin table world token-for-token]")
