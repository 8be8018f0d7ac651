"""Command-line entry point: ``ddosml prepare|train|evaluate|predict|synth|subsample``.

Every option can also come from ``--config file.json`` (keys are the option
names with dashes turned into underscores); options given on the command
line win. Output locations default to ``$DDOSML_OUTPUT_DIR`` when set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .artifact import atomic_write_text, load_json
from .exceptions import ArgumentError, DdosMLError, SchemaError
from .ingest import CICDDOS2019_LABELS, CleaningPolicy, LabelDictionary
from .pipeline import (
    PipelineConfig,
    cicddos_subsample,
    cmd_evaluate,
    cmd_predict,
    cmd_prepare,
    cmd_train,
)
from .synth import synthetic_csv

OUTPUT_DIR_ENV = "DDOSML_OUTPUT_DIR"

EXIT_OK = 0
EXIT_ARGUMENT = 2
EXIT_SCHEMA = 3
EXIT_IO = 4

DEFAULTS = {
    "prepare": {
        "test_fraction": 0.3, "k": 20, "seed": 0, "clean_policy": "zero",
        "drop_identifier_features": False, "timestamp": "hash", "drop_duplicates": False,
        "labels": None, "unknown_labels": "error", "selector_trees": 100, "n_jobs": 1,
    },
    "train": {"model": "rf", "n_jobs": 1},
    "evaluate": {"split": "test"},
    "predict": {},
    "synth": {"seed": 0},
    "subsample": {"seed": 0, "mssql_rows": 50000},
}

MODEL_FLAGS = {
    "rf": ("n_trees", "max_depth", "min_samples_split", "features_per_split", "seed", "n_jobs"),
    "dt": ("max_depth", "min_samples_split"),
    "gnb": ("smoothing_scale",),
    "svm": ("C", "reg", "max_epochs", "tol", "learning_rate", "lr_decay", "batch_size", "seed"),
}


def _features_per_split(text):
    if text in ("sqrt",):
        return text
    if text in ("all", "none"):
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer, 'sqrt' or 'all'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddosml", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", default=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file of option values")
        return p

    p = add("prepare", "parse, clean, split, standardize and select features")
    p.add_argument("--input", nargs="+", dest="input", help="flow CSV file(s)")
    p.add_argument("--out", help="prepared output directory")
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--k", type=int, help="number of features to keep")
    p.add_argument("--seed", type=int)
    p.add_argument("--drop-identifier-features", action="store_true")
    p.add_argument("--clean-policy", choices=["zero", "drop"], help="non-finite cell handling")
    p.add_argument("--timestamp", choices=["hash", "epoch"], help="Timestamp column encoding")
    p.add_argument("--drop-duplicates", action="store_true")
    p.add_argument("--labels", help="label dictionary JSON ({names, aliases}) or 'cicddos2019'")
    p.add_argument("--unknown-labels", choices=["error", "drop"])
    p.add_argument("--selector-trees", type=int)
    p.add_argument("--n-jobs", type=int)

    p = add("train", "fit one model on a prepared directory")
    p.add_argument("--prepared")
    p.add_argument("--model", choices=["rf", "dt", "gnb", "svm"])
    p.add_argument("--out", help="model artifact file")
    p.add_argument("--n-trees", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-samples-split", type=int)
    p.add_argument("--features-per-split", type=_features_per_split)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-jobs", type=int)
    p.add_argument("--smoothing-scale", type=float)
    p.add_argument("--C", type=float, dest="C")
    p.add_argument("--reg", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--lr-decay", type=float)
    p.add_argument("--batch-size", type=int)

    p = add("evaluate", "score a prepared split and write report.json + roc.csv")
    p.add_argument("--model", help="model artifact file")
    p.add_argument("--prepared")
    p.add_argument("--out", help="report output directory")
    p.add_argument("--split", choices=["test", "train"])

    p = add("predict", "score a raw flow CSV")
    p.add_argument("--model", help="model artifact file")
    p.add_argument("--input")
    p.add_argument("--out", help="predictions CSV")

    p = add("synth", "write class-conditional Gaussian flows as CSV")
    p.add_argument("--spec", help="JSON spec file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("subsample", "cut CICDDoS2019 day files down to all BENIGN/LDAP + sampled MSSQL rows")
    p.add_argument("--input", nargs="+")
    p.add_argument("--out")
    p.add_argument("--mssql-rows", type=int)
    p.add_argument("--seed", type=int)
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    given = {k: v for k, v in vars(args).items() if k not in ("command", "verbose", "config")}
    from_file = {}
    if getattr(args, "config", None):
        from_file = load_json(args.config)
        if not isinstance(from_file, dict):
            raise ArgumentError("--config file must hold a JSON object")
    return {**DEFAULTS[args.command], **from_file, **given}


def _require(opts, key, default_name=None):
    if opts.get(key) is not None:
        return opts[key]
    base = os.environ.get(OUTPUT_DIR_ENV)
    if default_name is not None and base:
        return str(Path(base) / default_name)
    flag = "--" + key.replace("_", "-")
    raise ArgumentError(f"{flag} is required" + (f" (or set {OUTPUT_DIR_ENV})" if default_name else ""))


def _label_dict(spec):
    if spec is None:
        return None
    if spec.lower() in ("cicddos2019", "cic"):
        return CICDDOS2019_LABELS
    return LabelDictionary.from_dict(load_json(spec))


def run(args: argparse.Namespace) -> int:
    opts = _resolve(args)
    cmd = args.command
    if cmd == "prepare":
        inputs = opts.get("input")
        if not inputs:
            raise ArgumentError("--input is required")
        config = PipelineConfig(
            inputs=tuple([inputs] if isinstance(inputs, str) else inputs),
            out=_require(opts, "out", "prepared"),
            label_dict=_label_dict(opts["labels"]),
            unknown_labels=opts["unknown_labels"],
            policy=CleaningPolicy(
                nonfinite=opts["clean_policy"],
                timestamp=opts["timestamp"],
                duplicates="drop" if opts["drop_duplicates"] else "keep",
                exclude_identifiers=opts["drop_identifier_features"],
            ),
            test_fraction=opts["test_fraction"],
            seed=opts["seed"],
            k=opts["k"],
            selector_trees=opts["selector_trees"],
            n_jobs=opts["n_jobs"],
        )
        manifest = cmd_prepare(config)
        for split in ("train", "test"):
            counts = ", ".join(f"{k}={v}" for k, v in manifest["rows"][split].items())
            print(f"{split}: {counts}")
        print(f"kept {len(manifest['features_kept'])} features -> {config.out}")
    elif cmd == "train":
        kind = opts["model"]
        params = {k: opts[k] for k in MODEL_FLAGS[kind] if k in opts}
        out = _require(opts, "out", f"model-{kind}.json")
        artifact = cmd_train(_require(opts, "prepared", "prepared"), kind, out, params)
        print(f"trained {artifact.kind} -> {out}")
    elif cmd == "evaluate":
        model = _require(opts, "model")
        out = _require(opts, "out", f"eval-{Path(model).stem}")
        report = cmd_evaluate(model, _require(opts, "prepared", "prepared"), out, opts["split"])
        print(report.format_table(f"{Path(model).stem} on {opts['split']} split"))
    elif cmd == "predict":
        pred = cmd_predict(_require(opts, "model"), _require(opts, "input"),
                           _require(opts, "out", "predictions.csv"))
        print(f"{pred.size} rows scored")
    elif cmd == "synth":
        spec = load_json(_require(opts, "spec"))
        out = _require(opts, "out", "synthetic.csv")
        atomic_write_text(out, synthetic_csv(spec, opts["seed"]))
        print(f"wrote {out}")
    elif cmd == "subsample":
        inputs = opts.get("input") or []
        out = _require(opts, "out", "cicddos2019-subsample.csv")
        counts = cicddos_subsample(inputs, out, {"DDoS_MSSQL": opts["mssql_rows"]}, opts["seed"])
        print(json.dumps(counts, sort_keys=True))
    return EXIT_OK


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, DdosMLError):
        return exc.exit_code
    if isinstance(exc, (OSError, UnicodeDecodeError)):
        return EXIT_IO
    if isinstance(exc, (ValueError, TypeError, KeyError)):
        return EXIT_ARGUMENT
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (DdosMLError, OSError, UnicodeDecodeError, ValueError, TypeError, KeyError) as exc:
        where = getattr(exc, "stage", None)
        prefix = f"ddosml {args.command}" + (f" [{where}]" if where else "")
        print(f"{prefix}: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
