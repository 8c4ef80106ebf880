"""Command-line entry point: ``relint <command> [options]``.

Exit codes: 0 success, 1 unexpected failure, 2 missing input, 3 invalid
configuration, 4 non-finite training loss. Failures print a single JSON
line ``{"error": ..., "exit": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys

from .evaluation import render
from .graph import TARGET, GraphError, ParallelData, RelationVocab
from .local import CandidateSet
from .neural import ContractError, NonFiniteError
from .pipeline import (
    STAGES,
    MissingInputError,
    RunConfigError,
    Workspace,
    default_config_text,
    evaluate_sets,
    load_run_config,
    run_pipeline,
    synthesize,
)
from .synthgen import ConfigError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MISSING = 2
EXIT_CONFIG = 3
EXIT_NONFINITE = 4

logger = logging.getLogger("relint")

# flag -> dotted config key
_FLAGS = {
    "source": "paths.source",
    "target": "paths.target",
    "train_data": "paths.train_data",
    "test_data": "paths.test_data",
    "work": "paths.work_dir",
    "seed": "run.seed",
    "epochs": "train.epochs",
    "folds": "train.folds",
    "loss_variant": "train.loss_variant",
    "threshold": "train.threshold",
    "k": "train.retrieval_k",
    "augment": "augment.enabled",
    "selection": "augment.selection",
    "visibility": "infer.visibility",
    "scenario": "synth.scenario",
    "families": "synth.families",
    "unmatched_fraction": "synth.unmatched_fraction",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config value")
    p.add_argument("--work", help="work directory")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _input_paths(p: argparse.ArgumentParser) -> None:
    p.add_argument("--source", help="source triples TSV")
    p.add_argument("--target", help="target triples TSV")
    p.add_argument("--train-data", help="training parallel data line-JSON")
    p.add_argument("--test-data", help="test parallel data line-JSON")


class _Parser(argparse.ArgumentParser):
    """Usage errors become configuration errors instead of exiting directly."""

    def error(self, message):
        raise RunConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relint", description="Integrate open-IE relations into a target KG vocabulary.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("config", help="print the default configuration")
    p.add_argument("--out", help="write to a file instead of stdout")

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    _common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scenario", choices=["benchmark", "fig1"])
    p.add_argument("--families", type=int)
    p.add_argument("--unmatched-fraction", type=float)

    p = sub.add_parser("ingest", help="load triples and parallel data into the work directory")
    _common(p)
    _input_paths(p)

    for name, text in (
        ("train-local", "train the local model"),
        ("candidates", "local candidate predictions for every source pair"),
        ("augment", "synthesize and select pseudo parallel data"),
        ("train-collective", "stacked training of the collective model"),
        ("infer", "collective predictions for the test pairs"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        if name in ("train-local", "train-collective"):
            p.add_argument("--epochs", type=int)
            p.add_argument("--loss-variant", choices=["verbatim", "one-minus-p"])
            p.add_argument("--augment", action="store_const", const="true", help="train on real plus selected pseudo pairs")
        if name == "train-collective":
            p.add_argument("--folds", type=int)
        if name == "augment":
            p.add_argument("--k", type=int)
            p.add_argument("--selection", choices=["retrieval", "random"])
        if name == "infer":
            p.add_argument("--visibility", type=float)
        if name == "candidates":
            p.add_argument("--threshold", type=float)

    p = sub.add_parser("evaluate", help="score predictions against gold data")
    _common(p)
    p.add_argument("--predictions", help="prediction line-JSON (default: the work directory's)")
    p.add_argument("--gold", help="gold parallel data line-JSON (default: the work directory's test split)")
    p.add_argument("--out", help="write the metrics JSON here")
    p.add_argument("--roc", action="store_true", help="also report ROC-AUC")

    p = sub.add_parser("pipeline", help="synth, ingest, train, infer and evaluate in one go")
    _common(p)
    p.add_argument("--scenario", choices=["benchmark", "fig1"])
    p.add_argument("--families", type=int)
    p.add_argument("--unmatched-fraction", type=float)
    p.add_argument("--augment", action="store_const", const="true")
    p.add_argument("--epochs", type=int)
    p.add_argument("--no-synth", action="store_true", help="use the configured input paths instead of generating data")
    _input_paths(p)
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    out = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise RunConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    for attr, dotted in _FLAGS.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[dotted] = str(value)
    return out


def _print_reports(reports) -> None:
    for stage, report in reports.items():
        cells = [f"auc={render(report.auc)}"]
        for p, v in report.at_precision.items():
            rec, f1 = (None, None) if v is None else v
            cells.append(f"p{p:g}: rec={render(rec)} f1={render(f1)}")
        print(f"{stage:<10} " + "  ".join(cells))


def _vocab_from_files(pred_text: str, gold_text: str) -> RelationVocab:
    """Target vocabulary in first-appearance order across predictions and gold."""
    vocab = RelationVocab(TARGET)
    for text, fieldname in ((pred_text, "probs"), (gold_text, "gold")):
        for line in text.splitlines():
            if line.strip():
                for r in json.loads(line)[fieldname]:
                    vocab.add(r)
    return vocab


def _evaluate_files(args, config) -> dict:
    for path in (args.predictions, args.gold):
        if not os.path.exists(path):
            raise MissingInputError(f"{path} not found")
    with open(args.predictions, encoding="utf-8") as fh:
        pred_text = fh.read()
    with open(args.gold, encoding="utf-8") as fh:
        gold_text = fh.read()
    vocab = _vocab_from_files(pred_text, gold_text)
    gold = ParallelData.from_jsonl(io.StringIO(gold_text), vocab)
    rows = [json.loads(line) for line in pred_text.splitlines() if line.strip()]
    stages = sorted({r.get("stage", "predictions") for r in rows})
    sets = {}
    for stage in stages:
        keep = [json.dumps(r) for r in rows if r.get("stage", "predictions") == stage]
        sets[stage] = CandidateSet.from_jsonl(io.StringIO("\n".join(keep)), vocab)
    results = evaluate_sets(sets, gold, config.targets, config.roc)
    return {s: r for s, (r, _) in results.items()}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "config":
        text = default_config_text()
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK

    if getattr(args, "roc", False):
        args.set.append("evaluate.roc=true")
    config = load_run_config(args.config, _overrides(args))

    if args.command == "synth":
        manifest = synthesize(config, args.out)
        print(json.dumps({"out": args.out, "checksums": manifest["checksums"]}, sort_keys=True))
        return EXIT_OK
    if args.command == "pipeline":
        reports = run_pipeline(config, synth=not args.no_synth)
        _print_reports(reports)
        return EXIT_OK
    if args.command == "evaluate" and (args.predictions or args.gold):
        if not (args.predictions and args.gold):
            raise MissingInputError("--predictions and --gold must be given together")
        reports = _evaluate_files(args, config)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                json.dump({s: r.to_json() for s, r in reports.items()}, fh, sort_keys=True, indent=1)
                fh.write("\n")
        _print_reports(reports)
        return EXIT_OK

    ws = Workspace(config.work_dir)
    out = STAGES[args.command](config, ws)
    ws.save(config)
    if args.command == "evaluate":
        _print_reports(out)
    return EXIT_OK


def _fail(kind: str, code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit": code, "message": str(exc)}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    try:
        return run(argv)
    except (MissingInputError, FileNotFoundError, GraphError) as exc:
        return _fail("missing-input", EXIT_MISSING, exc)
    except (RunConfigError, ConfigError) as exc:
        return _fail("config", EXIT_CONFIG, exc)
    except NonFiniteError as exc:
        return _fail("non-finite", EXIT_NONFINITE, exc)
    except ContractError as exc:
        return _fail("contract", EXIT_FAILURE, exc)


if __name__ == "__main__":
    sys.exit(main())
