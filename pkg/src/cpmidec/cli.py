"""Command-line interface; every subcommand composes library operations.

Exit codes: 0 success, 1 when any document failed during processing,
2 for configuration errors (bad flags, missing models, vocabulary
mismatches). JSON outputs encode -inf as null.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .bridge import BridgeModel, run_probe
from .corpus import build_vocab, decode_text, encode_text, load_corpus
from .decoder import decode_corpus
from .errors import CpmidecError, MissingMarginal
from .evaluate import (
    rouge_l,
    delta_by_label,
    entropy_by_label,
    factscore_mean,
    mean_rouge_f1,
    report_csv_rows,
    report_text,
)
from .models import (
    CopyMixtureModel,
    NGramLM,
    SourceFreeConditional,
    StepTableWorld,
    TableWorld,
    load_world,
    require_same_vocab,
    train_ngram,
)
from .scoring import ScoreStrategy, score_sequence, trace_records
from .tuner import GridSpec, grid_search


class ConfigError(Exception):
    pass


def _json_safe(value):
    if isinstance(value, float) and math.isinf(value):
        return None
    return value


def _dump(record: dict) -> str:
    return json.dumps({k: _json_safe(v) for k, v in record.items()}, ensure_ascii=False)


def _parse_model_args(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--model-arg expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key] = value
    return out


class ModelSetup:
    """Resolved conditional/marginal models plus the corpus they apply to."""

    def __init__(self, args, need_corpus: bool = True, need_marginal: bool = False):
        self.closeables: list[BridgeModel] = []
        margs = _parse_model_args(args.model_arg or [])
        self.world: TableWorld | StepTableWorld | None = None

        corpus_path = getattr(args, "corpus", None)
        if need_corpus and not corpus_path:
            raise ConfigError("--corpus is required")

        kind = args.model
        if kind in ("table", "bridge"):
            if kind == "table":
                path = margs.get("path")
                if not path:
                    raise ConfigError("--model table needs --model-arg path=world.json")
                self.world = load_world(path)
                self.cond = self.world.conditional
            else:
                self.cond = self._open_bridge(margs).conditional
            self.corpus = (
                load_corpus(corpus_path, self.cond.vocabulary) if corpus_path else None
            )
        elif kind in ("ngram", "copy"):
            if not corpus_path:
                raise ConfigError(f"--model {kind} trains on --corpus, which is required")
            self.corpus = load_corpus(corpus_path)
            order = int(margs.get("order", "2"))
            k = float(margs.get("k", "1.0"))
            fields = margs.get("fields", "both")
            lm = train_ngram(self.corpus, order=order, k=k, fields=fields)
            if kind == "ngram":
                self.cond = SourceFreeConditional(lm)
            else:
                self.cond = CopyMixtureModel(alpha=float(margs.get("alpha", "0.5")), background=lm)
        else:
            raise ConfigError(f"unknown --model {kind!r}")

        self.marg = None
        lm_spec = getattr(args, "lm", None)
        if lm_spec:
            self.marg = self._open_marginal(lm_spec)
            require_same_vocab(self.cond.vocabulary, self.marg.vocabulary)
        if need_marginal and self.marg is None:
            raise MissingMarginal("this command needs a marginal model (--lm)")

    def _open_bridge(self, margs: dict[str, str]) -> BridgeModel:
        timeout = float(margs.get("timeout", "30"))
        if "cmd" in margs:
            bridge = BridgeModel.spawn(margs["cmd"], timeout=timeout)
        elif "host" in margs and "port" in margs:
            bridge = BridgeModel.connect(margs["host"], int(margs["port"]), timeout=timeout)
        else:
            raise ConfigError("--model bridge needs --model-arg cmd=... or host=/port=")
        self.closeables.append(bridge)
        return bridge

    def _open_marginal(self, spec: str):
        if spec == "exact":
            if self.world is None:
                raise ConfigError("--lm exact requires --model table")
            return self.world.marginal
        if spec.startswith("bridge:"):
            margs = _parse_model_args(spec[len("bridge:") :].split(","))
            return self._open_bridge(margs).marginal
        if spec.startswith("train:"):
            margs = _parse_model_args(spec[len("train:") :].split(","))
            if self.corpus is None:
                raise ConfigError("--lm train:... requires --corpus")
            return train_ngram(
                self.corpus,
                order=int(margs.get("order", "2")),
                k=float(margs.get("k", "1.0")),
                fields=margs.get("fields", "both"),
            )
        return NGramLM.load(spec)

    def close(self) -> None:
        for b in self.closeables:
            b.close()


def _build_strategy(args) -> ScoreStrategy:
    name = args.strategy
    lam = getattr(args, "lam", None)
    tau = getattr(args, "tau", None)
    if name == "beam":
        if lam is not None or tau is not None:
            raise ConfigError("--strategy beam takes neither --lambda nor --tau")
        return ScoreStrategy.logprob()
    if name == "pmi":
        if lam is None:
            raise ConfigError("--strategy pmi requires --lambda")
        if tau is not None:
            raise ConfigError("--strategy pmi takes no --tau (that is cpmi)")
        return ScoreStrategy.pmi(lam)
    if name == "cpmi":
        if lam is None or tau is None:
            raise ConfigError("--strategy cpmi requires --lambda and --tau")
        return ScoreStrategy.cpmi(lam, tau)
    raise ConfigError(f"unknown strategy {name!r}")


def _require_marginal_for(strategy: ScoreStrategy, setup: ModelSetup) -> None:
    if strategy.needs_marginal and setup.marg is None:
        raise MissingMarginal(
            f"strategy {strategy.kind!r} needs a marginal model: pass --lm"
        )


def _write_lines(path: str | None, lines: list[str]) -> None:
    text = "\n".join(lines) + ("\n" if lines else "")
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- subcommands ---------------------------------------------------------------


def _cmd_decode(args) -> int:
    strategy = _build_strategy(args)
    setup = ModelSetup(args)
    try:
        _require_marginal_for(strategy, setup)
        corpus = setup.corpus
        assert corpus is not None
        outcome = decode_corpus(
            strategy,
            setup.cond,
            setup.marg if strategy.needs_marginal else None,
            corpus,
            k=args.beam,
            n_max=args.max_len,
            workers=args.workers,
        )
        vocab = corpus.vocabulary
        lines = []
        trace_lines = []
        for doc_id, result in outcome.succeeded:
            lines.append(
                _dump(
                    {
                        "id": doc_id,
                        "tokens": list(result.best.seq.ids),
                        "text": decode_text(result.best.seq, vocab),
                        "score": result.best.score,
                        "gate_fired_count": result.stats.gate_fired_count,
                        "max_entropy": result.stats.max_entropy,
                    }
                )
            )
            if args.trace:
                for rec in trace_records(doc_id, result.best.trace):
                    trace_lines.append(_dump(rec))
        _write_lines(args.out, lines)
        if args.trace:
            _write_lines(args.trace, trace_lines)
        for doc_id, message in outcome.failed:
            print(f"FAILED {doc_id}: {message}", file=sys.stderr)
        return 0 if outcome.ok else 1
    finally:
        setup.close()


def _cmd_score(args) -> int:
    strategy = _build_strategy(args)
    setup = ModelSetup(args)
    try:
        _require_marginal_for(strategy, setup)
        corpus = setup.corpus
        assert corpus is not None
        lines = []
        failures = 0
        totals = []
        for doc in corpus.documents:
            try:
                scored = score_sequence(
                    strategy,
                    setup.cond,
                    setup.marg if strategy.needs_marginal else None,
                    doc.source,
                    doc.reference,
                )
            except CpmidecError as exc:
                failures += 1
                print(f"FAILED {doc.id}: {exc}", file=sys.stderr)
                continue
            totals.append(scored.total)
            for rec in trace_records(doc.id, scored.steps):
                lines.append(_dump(rec))
        _write_lines(args.out, lines)
        if totals:
            print(f"scored {len(totals)} documents, mean total {sum(totals)/len(totals):.6f}")
        return 0 if failures == 0 else 1
    finally:
        setup.close()


def _report_out(args, report) -> None:
    rows = ["category,metric,mean,stderr,count"]
    rows += [f"{c},{m},{mean!r},{se!r},{n}" for c, m, mean, se, n in report_csv_rows(report)]
    if args.out:
        _write_lines(args.out, rows)
    print(report_text(report))


def _cmd_delta(args) -> int:
    if args.lam is None or args.tau is None:
        raise ConfigError("delta requires --lambda and --tau")
    setup = ModelSetup(args, need_marginal=True)
    try:
        corpus = setup.corpus
        assert corpus is not None
        report = delta_by_label(corpus, setup.cond, setup.marg, args.lam, args.tau)
        _report_out(args, report)
        return 0
    finally:
        setup.close()


def _cmd_entropy(args) -> int:
    setup = ModelSetup(args)
    try:
        corpus = setup.corpus
        assert corpus is not None
        report = entropy_by_label(corpus, setup.cond)
        _report_out(args, report)
        return 0
    finally:
        setup.close()


def _cmd_rouge(args) -> int:
    # Compare surface token strings: the decode output may come from a model
    # whose id space differs from a vocabulary rebuilt off the corpus text.
    references: dict[str, str] = {}
    for line_no, line in enumerate(
        Path(args.corpus).read_text(encoding="utf-8").splitlines(), 1
    ):
        if not line.strip():
            continue
        record = json.loads(line)
        references[record["id"]] = record["reference"]
    hypotheses: dict[str, str] = {}
    for line in Path(args.hyp).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        if record["id"] in references:
            hypotheses[record["id"]] = record["text"]

    vocab = build_vocab(
        (hypotheses[doc_id], references[doc_id]) for doc_id in hypotheses
    )
    scores = {
        doc_id: rouge_l(
            encode_text(text, vocab, as_complete=True),
            encode_text(references[doc_id], vocab, as_complete=True),
            vocab,
        )
        for doc_id, text in hypotheses.items()
    }
    rows = ["id,precision,recall,f1"]
    for doc_id, s in scores.items():
        rows.append(f"{doc_id},{s.precision!r},{s.recall!r},{s.f1!r}")
    if args.out:
        _write_lines(args.out, rows)
    print(f"mean rouge-l f1 over {len(scores)} documents: {mean_rouge_f1(scores):.6f}")
    return 0


def _cmd_factscore(args) -> int:
    corpus = load_corpus(args.corpus)
    value = factscore_mean(corpus, micro=args.micro)
    mode = "micro" if args.micro else "macro"
    print(f"factscore ({mode}): {value:.6f}")
    if args.out:
        _write_lines(args.out, [f"factscore,{mode},{value!r}"])
    return 0


def _cmd_tune(args) -> int:
    setup = ModelSetup(args, need_marginal=True)
    try:
        corpus = setup.corpus
        assert corpus is not None
        payload = json.loads(Path(args.grid).read_text(encoding="utf-8"))
        grid = GridSpec(
            lambdas=tuple(float(x) for x in payload["lambdas"]),
            taus=tuple(float(x) for x in payload["taus"]) if "taus" in payload else None,
            tau_samples=int(payload.get("tau_samples", 0)),
            seed=args.seed if args.seed is not None else int(payload.get("seed", 0)),
            weights=tuple(payload.get("weights", (3.0, 1.0))),  # type: ignore[arg-type]
        )
        result = grid_search(
            corpus,
            setup.cond,
            setup.marg,
            grid,
            k=args.beam,
            n_max=args.max_len,
            workers=args.workers,
            csv_path=args.out,
        )
        print(f"best lambda={result.best_lambda!r} tau={result.best_tau!r}")
        return 0
    finally:
        setup.close()


def _cmd_train_lm(args) -> int:
    corpus = load_corpus(args.corpus)
    lm = train_ngram(corpus, order=args.order, k=args.smoothing, fields=args.fields)
    lm.save(args.out)
    print(f"saved order-{args.order} model over {len(lm.vocabulary)} tokens to {args.out}")
    return 0


def _cmd_bridge_check(args) -> int:
    margs = _parse_model_args(args.model_arg or [])
    timeout = float(margs.get("timeout", "30"))
    if "cmd" in margs:
        bridge = BridgeModel.spawn(margs["cmd"], timeout=timeout)
    elif "host" in margs and "port" in margs:
        bridge = BridgeModel.connect(margs["host"], int(margs["port"]), timeout=timeout)
    else:
        raise ConfigError("bridge-check needs --model-arg cmd=... or host=/port=")
    try:
        sources = None
        if args.corpus:
            corpus = load_corpus(args.corpus, bridge.vocabulary)
            sources = [doc.source for doc in corpus.documents]
        transcript = None
        if args.transcript:
            transcript = [
                json.loads(line)
                for line in Path(args.transcript).read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
        report = run_probe(
            bridge,
            n_requests=args.requests,
            seed=args.seed if args.seed is not None else 0,
            max_depth=args.probe_depth,
            sources=sources,
            transcript=transcript,
        )
        print(
            f"requests={report.requests} max|logsumexp|={report.max_abs_logsumexp:.3e} "
            f"transcript={report.transcript_checked} mismatches={report.transcript_mismatches}"
        )
        for f in report.failures:
            print(f"FAIL {f}", file=sys.stderr)
        print("bridge-check: PASS" if report.passed else "bridge-check: FAIL")
        return 0 if report.passed else 1
    finally:
        bridge.close()


# -- parser --------------------------------------------------------------------


def _add_common(sub, corpus=True, model=True, strategy=False, out=True):
    if corpus:
        sub.add_argument("--corpus", help="newline-JSON corpus file")
    if model:
        sub.add_argument(
            "--model",
            choices=("ngram", "copy", "table", "bridge"),
            default="table",
            help="conditional model kind",
        )
        sub.add_argument(
            "--model-arg",
            action="append",
            metavar="KEY=VALUE",
            help="model parameter; repeatable",
        )
        sub.add_argument(
            "--lm",
            help="marginal model: 'exact', an n-gram JSON path, 'train:order=2,...' "
            "or 'bridge:cmd=...'",
        )
    if strategy:
        sub.add_argument("--strategy", choices=("beam", "pmi", "cpmi"), default="beam")
        sub.add_argument("--lambda", dest="lam", type=float, default=None)
        sub.add_argument("--tau", type=float, default=None)
    sub.add_argument("--beam", type=int, default=5, help="beam width (default 5)")
    sub.add_argument("--max-len", type=int, default=32)
    sub.add_argument("--workers", type=int, default=1)
    sub.add_argument("--seed", type=int, default=None)
    if out:
        sub.add_argument("--out", help="output path (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpmidec",
        description="Beam search with entropy-gated PMI scoring, evaluation and tuning.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("decode", help="decode a corpus")
    _add_common(p, strategy=True)
    p.add_argument("--trace", help="also write per-step score traces to this path")
    p.set_defaults(func=_cmd_decode)

    p = subs.add_parser("score", help="score reference summaries, emit traces")
    _add_common(p, strategy=True)
    p.set_defaults(func=_cmd_score)

    p = subs.add_parser("delta", help="score/rank deltas by hallucination label")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.set_defaults(func=_cmd_delta)

    p = subs.add_parser("entropy", help="conditional entropy by hallucination label")
    _add_common(p)
    p.set_defaults(func=_cmd_entropy)

    p = subs.add_parser("rouge", help="ROUGE-L of decoded output against references")
    p.add_argument("--corpus", required=True)
    p.add_argument("--hyp", required=True, help="decode output JSONL")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_rouge)

    p = subs.add_parser("factscore", help="label-mean factuality of a labeled corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--micro", action="store_true", help="pool tokens instead of documents")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_factscore)

    p = subs.add_parser("tune", help="grid search over (lambda, tau)")
    _add_common(p)
    p.add_argument("--grid", required=True, help="grid JSON: lambdas + taus|tau_samples")
    p.set_defaults(func=_cmd_tune)

    p = subs.add_parser("train-lm", help="train and save an n-gram language model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--smoothing", type=float, default=1.0)
    p.add_argument("--fields", choices=("references", "both"), default="both")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_lm)

    p = subs.add_parser("bridge-check", help="protocol conformance probe")
    p.add_argument("--model-arg", action="append", metavar="KEY=VALUE")
    p.add_argument("--corpus", help="corpus supplying probe sources (conditional mode)")
    p.add_argument("--transcript", help="golden transcript JSONL to replay")
    p.add_argument("--requests", type=int, default=1000)
    p.add_argument("--probe-depth", type=int, default=3)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_bridge_check)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, MissingMarginal) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CpmidecError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
