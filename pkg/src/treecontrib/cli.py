"""``treecontrib`` command line: train, annotate, explain, report, convert.

Defaults can be supplied through ``TREECONTRIB_*`` environment variables
(e.g. ``TREECONTRIB_SEED``); explicit flags win over the environment.

Exit codes: 0 ok, 2 unreadable input (CSV/JSON/PMML), 3 configuration error,
4 catalog mismatch, 5 variant not annotated, 6 degenerate labels, 7 routing
failure on a missing value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .annotate import AnnotatedEnsemble, Variant, annotate
from .contrib import contributions_csv, contributions_jsonl, explain_batch
from .errors import (
    CatalogMismatchError,
    DegenerateLabelsError,
    MissingValueError,
    ModelInvariantError,
    ParseError,
    VariantUnavailableError,
)
from .ingest import Dataset, NativeModelDocument, load_csv, parse_native, parse_pmml, serialize_native, serialize_pmml
from .metrics import DEFAULT_K_SET, RankingMethod, consistency_report
from .reference import TrainConfig, fit_gbdt, fit_random_forest

EXIT_PARSE = 2
EXIT_CONFIG = 3
EXIT_CATALOG = 4
EXIT_VARIANT = 5
EXIT_LABELS = 6
EXIT_ROUTING = 7

ENV_PREFIX = "TREECONTRIB_"


class ConfigError(Exception):
    pass


def _env(name: str, default, cast=str):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"environment variable {ENV_PREFIX + name}={raw!r} is invalid") from None


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"input file not found: {path}")
    return p.read_text(encoding="utf-8")


def _write(path: str, text: str) -> None:
    p = Path(path)
    if p.parent and not p.parent.exists():
        raise ConfigError(f"output directory does not exist: {p.parent}")
    p.write_text(text, encoding="utf-8")


def _format_of(path: str, explicit: str | None) -> str:
    if explicit:
        return explicit
    suffix = Path(path).suffix.lower()
    if suffix in (".pmml", ".xml"):
        return "pmml"
    if suffix == ".json":
        return "native"
    raise ConfigError(f"cannot infer model format from {path!r}; pass --from/--to")


def _load_model(path: str, fmt: str | None = None) -> NativeModelDocument:
    text = _read(path)
    if _format_of(path, fmt) == "pmml":
        return NativeModelDocument(parse_pmml(text))
    return parse_native(text)


def _load_data(path: str, label: str | None, missing_token: str) -> Dataset:
    return load_csv(_read(path), label, missing_token)


def _annotated(doc: NativeModelDocument, data: Dataset, threads: int, what: str) -> AnnotatedEnsemble:
    if doc.annotations is not None:
        return doc.annotated()
    print(f"{what} carries no annotations; annotating with the given data", file=sys.stderr)
    return annotate(doc.ensemble, data.aligned_to(doc.ensemble.catalog), threads=threads)


def cmd_train(args) -> int:
    config = TrainConfig(
        max_depth=args.depth,
        min_samples_leaf=args.min_leaf,
        n_trees=args.trees,
        shrinkage=args.shrinkage,
        rf_feature_fraction=args.feature_fraction,
        rf_bootstrap=args.bootstrap,
        seed=args.seed,
    )
    data = _load_data(args.data, args.label, args.missing_token)
    try:
        data.numeric_matrix()
    except ValueError as exc:
        raise ConfigError(f"the reference trainer needs numeric, complete features: {exc}") from None
    if args.model == "gbdt":
        ensemble, trace = fit_gbdt(data, config)
        for m, loss in enumerate(trace.losses[1:], start=1):
            print(f"iteration {m}: training loss {loss:.6g}")
        if args.trace:
            _write(args.trace, trace.to_csv())
    else:
        if not data.has_binary_labels():
            raise ConfigError("random forest needs binary labels in {0, 1}")
        ensemble = fit_random_forest(data, config)
    _write(args.output, serialize_native(ensemble))
    print(f"wrote {len(ensemble.trees)} trees to {args.output}")
    return 0


def cmd_annotate(args) -> int:
    doc = _load_model(args.model, args.model_format)
    data = _load_data(args.data, args.label, args.missing_token).aligned_to(doc.ensemble.catalog)
    model = annotate(doc.ensemble, data, threads=args.threads)
    _write(args.output, serialize_native(model))
    if args.dump_counts:
        for m, (tree, ann) in enumerate(zip(model.ensemble.trees, model.annotations)):
            counts = " ".join(f"{nid}:{ann[nid].count}" for nid in sorted(tree.nodes))
            print(f"tree {m} root={ann[tree.root_id].count} {counts}")
    variants = ", ".join(v.value for v in Variant if v in model.variants)
    print(f"annotated {len(model.ensemble.trees)} trees over {len(data)} rows; variants: {variants}")
    return 0


def cmd_explain(args) -> int:
    doc = _load_model(args.model, args.model_format)
    if doc.annotations is None:
        raise VariantUnavailableError("model has no annotations; run `treecontrib annotate` first")
    model = doc.annotated()
    variant = Variant(args.variant)
    model.require(variant)
    data = _load_data(args.data, args.label, args.missing_token).aligned_to(model.ensemble.catalog)
    vectors, _ = explain_batch(model, data, variant, threads=args.threads)
    catalog = model.ensemble.catalog
    fmt = args.format or ("jsonl" if args.top_k is not None else "csv")
    text = contributions_jsonl(vectors, catalog, args.top_k) if fmt == "jsonl" else contributions_csv(vectors, catalog)
    if args.output:
        _write(args.output, text)
    else:
        sys.stdout.write(text)
    worst = max(v.reconstruction_error for v in vectors)
    print(f"explained {len(vectors)} rows ({variant.value}); max |baseline + sum(FC) - prediction| = {worst:.3g}",
          file=sys.stderr if not args.output else sys.stdout)
    return 0


def cmd_report(args) -> int:
    doc = _load_model(args.model, args.model_format)
    data = _load_data(args.data, args.label, args.missing_token).aligned_to(doc.ensemble.catalog)
    model = _annotated(doc, data, args.threads, "model")
    rf = None
    if args.rf_model:
        rf_doc = _load_model(args.rf_model)
        rf = _annotated(rf_doc, data.aligned_to(rf_doc.ensemble.catalog), args.threads, "rf model")
    reference = RankingMethod.IV if args.reference == "iv" else RankingMethod.GAIN_FI
    candidates = [v for v in (Variant.SIMPLE, Variant.WEIGHTED) if v in model.variants]
    report = consistency_report(model, data, reference, candidates, args.k, rf, args.bins, args.threads)
    out = Path(args.out_dir)
    if not out.is_dir():
        raise ConfigError(f"output directory does not exist: {out}")
    _write(str(out / "consistency.csv"), report.consistency_csv())
    _write(str(out / "intersections.csv"), report.intersections_csv())
    summary = {
        "reference": report.reference.method.value,
        "rankings": {name: [list(e) for e in r.entries] for name, r in report.rankings.items()},
        "intersections": [{"k": k, "candidate": c, "size": s} for k, c, s in report.intersections],
    }
    _write(str(out / "report.json"), json.dumps(summary, indent=2) + "\n")
    for k, name, size in report.intersections:
        print(f"k={k:<3} {name:<9} {size}")
    return 0


def cmd_convert(args) -> int:
    doc = _load_model(args.input, args.source)
    target = _format_of(args.output, args.target)
    if target == "pmml":
        if doc.annotations is not None:
            print("warning: annotations are not representable in PMML and were dropped", file=sys.stderr)
        _write(args.output, serialize_pmml(doc.ensemble))
    else:
        _write(args.output, serialize_native(doc))
    print(f"converted {args.input} -> {args.output}")
    return 0


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treecontrib", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=_env("THREADS", 1, int))
    common.add_argument("--missing-token", default=_env("MISSING_TOKEN", ""),
                        help="CSV cell value read as MISSING (default: empty cell)")
    common.add_argument("--model-format", choices=("pmml", "native"), default=None,
                        help="model file format (default: from extension)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train a reference GBDT or random forest")
    p.add_argument("data")
    p.add_argument("--label", default=_env("LABEL", "y"))
    p.add_argument("--model", choices=("gbdt", "rf"), default="gbdt")
    p.add_argument("--trees", type=int, default=10)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--shrinkage", type=float, default=1.0)
    p.add_argument("--feature-fraction", type=float, default=1.0)
    p.add_argument("--bootstrap", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--seed", type=int, default=_env("SEED", 0, int))
    p.add_argument("--trace", help="write per-iteration residuals (GBDT) as CSV")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("annotate", parents=[common], help="attach counts, node scores and increments")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--label", default=_env("LABEL", "y"))
    p.add_argument("--dump-counts", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("explain", parents=[common], help="per-instance feature contributions")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--label", default=None, help="label column to ignore, if present")
    p.add_argument("--variant", choices=[v.value for v in Variant], default="weighted")
    p.add_argument("--top-k", type=_positive_int, default=None)
    p.add_argument("--format", choices=("csv", "jsonl"), default=None)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("report", parents=[common], help="FI / IV / FC-median consistency report")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--label", default=_env("LABEL", "y"))
    p.add_argument("--reference", choices=("iv", "fi"), default="iv")
    p.add_argument("--k", type=_positive_int, nargs="+", default=list(DEFAULT_K_SET))
    p.add_argument("--rf-model", help="annotated random forest for the label-distribution candidate")
    p.add_argument("--bins", type=_positive_int, default=10)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("convert", help="convert between PMML and native JSON")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--from", dest="source", choices=("pmml", "native"))
    p.add_argument("--to", dest="target", choices=("pmml", "native"))
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        code, err = EXIT_CONFIG, exc
    except (ParseError, ModelInvariantError) as exc:
        code, err = EXIT_PARSE, exc
    except CatalogMismatchError as exc:
        code, err = EXIT_CATALOG, exc
    except VariantUnavailableError as exc:
        code, err = EXIT_VARIANT, exc
    except DegenerateLabelsError as exc:
        code, err = EXIT_LABELS, exc
    except MissingValueError as exc:
        code, err = EXIT_ROUTING, exc
    print(f"treecontrib: error: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
