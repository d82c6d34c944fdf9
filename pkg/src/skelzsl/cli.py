"""Command-line entry point: ``skelzsl <subcommand> --config C --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 data or contamination
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericalError, UsageError, ZslError
from .evaluate import EvalReport, aggregate_csv, aggregate_markdown
from .pipeline import Experiment, load_config, resolve_config

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

STAGE_METHODS = {
    "generate": "generate",
    "make-split": "make_split",
    "train-encoder": "train_encoder",
    "extract-features": "extract",
    "train-devise": "train_devise",
    "train-relation": "train_relation",
    "evaluate": "evaluate",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skelzsl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="experiment JSON (desk defaults if omitted)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--force", action="store_true", help="recompute even if up to date")

    for name in list(STAGE_METHODS) + ["run"]:
        common(sub.add_parser(name, help=f"run the {name} stage" if name != "run"
                              else "run every stage"))
    rep = sub.add_parser("report", help="aggregate report JSON files into CSV and Markdown")
    rep.add_argument("inputs", nargs="+", type=Path, help="report files or run directories")
    rep.add_argument("--out", type=Path, required=True, help="directory for summary.csv/.md")
    rep.add_argument("--config", type=Path, help=argparse.SUPPRESS)
    rep.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    rep.add_argument("--force", action="store_true", help=argparse.SUPPRESS)
    return parser


def _collect_reports(inputs):
    files = []
    for p in inputs:
        if p.is_dir():
            files += sorted((p / "reports").glob("*_*.json")) or sorted(p.glob("*_*.json"))
        elif p.exists():
            files.append(p)
        else:
            raise ConfigError(f"no such report input: {p}")
    if not files:
        raise ConfigError("no report files found")
    try:
        return [EvalReport.from_json(json.loads(f.read_text())) for f in files]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"malformed report: {exc}") from None


def _execute(args) -> None:
    if args.command == "report":
        reports = _collect_reports(args.inputs)
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "summary.csv").write_text(aggregate_csv(reports))
        (args.out / "summary.md").write_text(aggregate_markdown(reports))
        print(aggregate_markdown(reports), end="")
        return
    cfg = load_config(args.config, args.seed) if args.config else resolve_config({}, args.seed)
    exp = Experiment(cfg, args.out, force=args.force)
    if args.command == "run":
        reports = exp.run_all()
        print(aggregate_markdown(reports), end="")
        return
    ran = getattr(exp, STAGE_METHODS[args.command])()
    if args.command in ("train-encoder", "train-devise", "train-relation"):
        exp.audit()
    print(f"{args.command}: {'done' if ran else 'up to date'}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _execute(args)
    except (ConfigError, UsageError) as exc:
        code, err = EXIT_CONFIG, exc
    except DataError as exc:
        code, err = EXIT_DATA, exc
    except NumericalError as exc:
        code, err = EXIT_NUMERIC, exc
    except ZslError as exc:
        code, err = EXIT_CONFIG, exc
    except OSError as exc:
        # missing upstream artifact or unwritable output
        code, err = EXIT_CONFIG, exc
    else:
        return EXIT_OK
    stage = getattr(err, "stage", None)
    where = f"[{stage}] " if stage else ""
    print(f"skelzsl: error: {where}{type(err).__name__}: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
