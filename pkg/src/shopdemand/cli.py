"""Command-line interface.

Each subcommand wraps one library operation and writes its result to disk:
JSON for reports and models, CSV for tables, SVG for figures.

Defaults can come from a JSON config file whose keys are the long flag
names without dashes (``{"trees": 400, "huber-alpha": 0.9}``).  The file is
taken from ``--config`` or the ``SHOPDEMAND_CONFIG`` environment variable;
explicit flags override it.

Exit codes: 0 success, 1 domain error (bad file, schema, or data), 2 usage.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import gbm, metrics, selection
from .data import Dataset, FeatureKind, Schema
from .errors import NoModelPassesGate, SchemaMismatch, ShopDemandError
from .explain import (
    ShapleyConfig,
    ale_binary,
    ale_curve,
    default_background,
    importance,
    shapley_attributions,
)
from .plots import render_ale_svg, render_importance_svg

CONFIG_ENV = "SHOPDEMAND_CONFIG"

log = logging.getLogger("shopdemand")


class UsageError(Exception):
    """Bad flag combination detected after parsing; exits with code 2."""


@dataclass
class RunConfig:
    """Every CLI parameter with its default.  Field ``foo_bar`` is flag ``--foo-bar``."""

    # paths
    data: str | None = None
    val: str | None = None
    train: str | None = None
    schema: str | None = None
    model: str | None = None
    out: str | None = None
    svg: str | None = None
    csv_dir: str | None = None
    grid: str | None = None
    synth_config: str | None = None
    # synthetic data and splitting
    n: int = 2000
    fractions: list[float] = field(default_factory=lambda: [0.6, 0.2, 0.2])
    # boosting
    trees: int = 400
    depth: int = 7
    leaf: int = 10
    lr: float = 0.01
    huber_alpha: float = 0.9
    huber_delta: float | None = None
    line_search_tol: float = 1e-8
    # selection
    fast: bool = False
    gap: float = selection.OVERFIT_GAP
    folds: int = 10
    threshold: float = selection.RFE_STOP_THRESHOLD
    resplit: bool = False
    # explanation
    mode: str = "permutation"
    permutations: int = 100
    background: int = 100
    rows: int = 100
    feature: str | None = None
    k: int = 40
    baseline: str | None = None
    # global
    seed: int = 0
    jobs: int = 1

    @staticmethod
    def key(field_name: str) -> str:
        return field_name.replace("_", "-")

    def to_dict(self) -> dict:
        return {self.key(f.name): getattr(self, f.name) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        names = {cls.key(f.name): f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - set(names))
        if unknown:
            raise ShopDemandError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**{names[k]: v for k, v in doc.items()})

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ShopDemandError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ShopDemandError(f"config {path} must hold a JSON object")
        return cls.from_dict(doc)

    def save(self, path: str | Path) -> None:
        write_atomic(path, json.dumps(self.to_dict(), indent=2) + "\n")


# --- helpers -------------------------------------------------------------------


def write_atomic(path: str | Path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _schema(args) -> Schema:
    return data_mod.load_schema(args.schema) if args.schema else data_mod.retained_schema()


def _dataset(path: str, args) -> Dataset:
    return data_mod.load_csv(path, _schema(args))


def _huber(args) -> gbm.HuberConfig:
    if args.huber_delta is not None:
        return gbm.HuberConfig.fixed(args.huber_delta)
    return gbm.HuberConfig.quantile(args.huber_alpha)


def _params(args) -> gbm.GbmParams:
    return gbm.GbmParams(args.trees, args.depth, args.leaf, args.lr, _huber(args),
                         args.line_search_tol)


def _grid(args) -> selection.Grid:
    if args.grid:
        return selection.Grid.from_dict(json.loads(Path(args.grid).read_text(encoding="utf-8")))
    return selection.reduced_grid() if args.fast else selection.default_grid()


def _require(args, *names: str) -> None:
    missing = [f"--{RunConfig.key(n)}" for n in names if getattr(args, n) in (None, "")]
    if missing:
        raise UsageError(f"{args.command} requires {', '.join(missing)}")


# --- commands --------------------------------------------------------------------


def cmd_synth(args) -> int:
    _require(args, "out")
    if args.synth_config:
        doc = json.loads(Path(args.synth_config).read_text(encoding="utf-8"))
        cfg = data_mod.SynthConfig.from_dict(doc)
    else:
        cfg = data_mod.default_synth_config()
    cfg.n, cfg.seed = args.n, args.seed
    write_atomic(args.out, data_mod.csv_text(data_mod.synth(cfg, _schema(args))))
    return 0


def cmd_split(args) -> int:
    _require(args, "data", "out")
    ds = _dataset(args.data, args)
    idx = data_mod.split(ds, tuple(args.fractions), args.seed)
    if args.csv_dir:
        out_dir = Path(args.csv_dir)
        for part in ("train", "validation", "test"):
            rows = np.asarray(getattr(idx, part), dtype=np.intp)
            write_atomic(out_dir / f"{part}.csv", data_mod.csv_text(ds.take(rows)))
    write_atomic(args.out, dump_json(idx.to_dict()))
    return 0


def cmd_train(args) -> int:
    _require(args, "data", "out")
    model = gbm.fit(_dataset(args.data, args), _params(args))
    write_atomic(args.out, gbm.dumps_model(model))
    return 0


def cmd_grid(args) -> int:
    _require(args, "data", "val", "out")
    train, val = _dataset(args.data, args), _dataset(args.val, args)
    candidates = selection.grid_search(train, val, _grid(args), args.jobs)
    report = {"candidates": [c.to_dict() for c in candidates], "selected": None}
    try:
        report["selected"] = selection.select_best(candidates, args.gap).to_dict()
    except NoModelPassesGate:
        # keep the candidate table for inspection, then fail
        write_atomic(args.out, dump_json(report))
        raise
    write_atomic(args.out, dump_json(report))
    return 0


def cmd_cv(args) -> int:
    _require(args, "data", "out")
    report = selection.cross_validate(_dataset(args.data, args), _params(args), args.folds,
                                      args.seed, args.jobs)
    write_atomic(args.out, dump_json(report.to_dict()))
    return 0


def cmd_rfe(args) -> int:
    _require(args, "data", "out")
    trace = selection.rfe(
        _dataset(args.data, args), _grid(args), args.threshold, args.seed, cv_k=args.folds,
        resplit=args.resplit, gap=args.gap, n_permutations=args.permutations,
        background_size=args.background, explain_rows=args.rows, jobs=args.jobs)
    write_atomic(args.out, dump_json(trace.to_dict()))
    return 0


def cmd_predict(args) -> int:
    _require(args, "model", "data", "out")
    model = gbm.load_model(args.model)
    pred = gbm.predict(model, _dataset(args.data, args))
    lines = ["prediction"] + [data_mod.format_real(v) for v in pred]
    write_atomic(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_eval(args) -> int:
    _require(args, "data", "out")
    test = _dataset(args.data, args)
    if args.baseline:
        _require(args, "train")
        fitted = metrics.fit_baseline(_dataset(args.train, args), args.baseline)
        pred = metrics.predict_baseline(fitted, test.x)
        kind = args.baseline
    else:
        _require(args, "model")
        pred = gbm.predict(gbm.load_model(args.model), test)
        kind = "gbm"
    report = {"model": kind, "n": test.n, "r2": metrics.r_squared(test.y, pred),
              "rmse": metrics.rmse(test.y, pred)}
    write_atomic(args.out, dump_json(report))
    return 0


def cmd_shap(args) -> int:
    _require(args, "model", "data")
    if not (args.out or args.svg):
        raise UsageError("shap needs --out and/or --svg")
    model = gbm.load_model(args.model)
    ds = _dataset(args.data, args)
    if ds.schema.fingerprint() != model.schema_fingerprint:
        raise SchemaMismatch("dataset schema differs from the one the model was trained on")
    rows = ds.x if args.rows <= 0 else default_background(ds, args.rows, args.seed + 1)
    cfg = ShapleyConfig(default_background(ds, args.background, args.seed), mode=args.mode,
                        n_permutations=args.permutations, seed=args.seed)
    attributions = shapley_attributions(model, rows, cfg)
    report = importance(attributions)
    names = ds.schema.names
    if args.out:
        doc = {"importance": report.to_dict(names), "attributions": attributions.to_dict(names)}
        write_atomic(args.out, dump_json(doc))
    if args.svg:
        write_atomic(args.svg, render_importance_svg(report, names))
    return 0


def cmd_ale(args) -> int:
    _require(args, "model", "data", "feature")
    if not (args.out or args.svg):
        raise UsageError("ale needs --out and/or --svg")
    model = gbm.load_model(args.model)
    ds = _dataset(args.data, args)
    if ds.schema.fingerprint() != model.schema_fingerprint:
        raise SchemaMismatch("dataset schema differs from the one the model was trained on")
    j = ds.schema.index(args.feature)
    if ds.schema.features[j].kind is FeatureKind.BINARY:
        curve = ale_binary(model, ds, j)
    else:
        curve = ale_curve(model, ds, j, args.k)
    csv_path = args.out or str(Path(args.svg).with_suffix(".csv"))
    write_atomic(csv_path, curve.to_csv())
    if args.svg:
        write_atomic(args.svg, render_ale_svg(curve, args.feature))
    return 0


# --- parser ------------------------------------------------------------------------

_FLAGS = {
    "data": dict(help="input CSV (header: features then response)"),
    "val": dict(help="validation CSV"),
    "train": dict(help="training CSV for a baseline fit"),
    "schema": dict(help="schema JSON; the built-in retained schema when omitted"),
    "model": dict(help="model JSON written by train"),
    "out": dict(help="output file"),
    "svg": dict(help="SVG figure output"),
    "csv_dir": dict(help="also write train/validation/test CSVs into this directory"),
    "grid": dict(help="grid JSON with keys trees, depth, leaf, lr"),
    "synth_config": dict(help="generator settings JSON; the built-in defaults when omitted"),
    "n": dict(type=int, help="number of synthetic rows"),
    "fractions": dict(type=float, nargs=3, metavar="F", help="train, validation, test shares"),
    "trees": dict(type=int, help="number of boosting stages"),
    "depth": dict(type=int, help="maximum tree depth"),
    "leaf": dict(type=int, help="minimum rows per leaf"),
    "lr": dict(type=float, help="learning rate (shrinkage)"),
    "huber_alpha": dict(type=float, help="residual quantile that sets the Huber threshold"),
    "huber_delta": dict(type=float, help="fixed Huber threshold (overrides --huber-alpha)"),
    "line_search_tol": dict(type=float, help="step-length search tolerance"),
    "fast": dict(action="store_true", help="use the small built-in grid"),
    "gap": dict(type=float, help="largest accepted train-validation R^2 gap (exclusive)"),
    "folds": dict(type=int, help="number of CV folds"),
    "threshold": dict(type=float, help="RFE stops when the CV score drops by more than this"),
    "resplit": dict(action="store_true", help="draw a fresh holdout split every RFE round"),
    "mode": dict(choices=("exact", "permutation"), help="Shapley computation"),
    "permutations": dict(type=int, help="orderings per row in permutation mode"),
    "background": dict(type=int, help="background sample size"),
    "rows": dict(type=int, help="rows to explain (seeded subsample; 0 means all)"),
    "feature": dict(help="feature name"),
    "k": dict(type=int, help="number of ALE intervals"),
    "baseline": dict(choices=("linear", "quadratic"), help="evaluate a least-squares baseline"),
    "seed": dict(type=int, help="random seed"),
    "jobs": dict(type=int, help="worker processes (does not change results)"),
}

_COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic household dataset",
              ["schema", "synth_config", "n", "seed", "out"]),
    "split": (cmd_split, "split rows into train / validation / test",
              ["data", "schema", "fractions", "seed", "out", "csv_dir"]),
    "train": (cmd_train, "fit a boosted model",
              ["data", "schema", "trees", "depth", "leaf", "lr", "huber_alpha", "huber_delta",
               "line_search_tol", "out"]),
    "grid": (cmd_grid, "grid search with the overfit gate",
             ["data", "val", "schema", "grid", "fast", "huber_alpha", "huber_delta",
              "line_search_tol", "gap", "jobs", "out"]),
    "cv": (cmd_cv, "k-fold cross-validation of one setting",
           ["data", "schema", "trees", "depth", "leaf", "lr", "huber_alpha", "huber_delta",
            "line_search_tol", "folds", "seed", "jobs", "out"]),
    "rfe": (cmd_rfe, "recursive feature elimination by Shapley importance",
            ["data", "schema", "grid", "fast", "gap", "folds", "threshold", "resplit",
             "permutations", "background", "rows", "seed", "jobs", "out"]),
    "predict": (cmd_predict, "predict with a saved model",
                ["model", "data", "schema", "out"]),
    "eval": (cmd_eval, "R^2 and RMSE on a labeled dataset",
             ["model", "data", "schema", "baseline", "train", "out"]),
    "shap": (cmd_shap, "Shapley attributions and importance",
             ["model", "data", "schema", "mode", "permutations", "background", "rows", "seed",
              "out", "svg"]),
    "ale": (cmd_ale, "ALE curve of one feature",
            ["model", "data", "schema", "feature", "k", "out", "svg"]),
}


def build_parser(config: RunConfig | None = None) -> argparse.ArgumentParser:
    config = config or RunConfig()
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="shopdemand", description=__doc__.splitlines()[0],
                                     formatter_class=fmt)
    parser.add_argument("--config", default=None,
                        help=f"config JSON (default: ${CONFIG_ENV} when set)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name, (func, summary, flags) in _COMMANDS.items():
        p = sub.add_parser(name, help=summary, description=summary, formatter_class=fmt)
        p.add_argument("--config", default=argparse.SUPPRESS,
                       help=f"config JSON (default: ${CONFIG_ENV} when set)")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                       help="log progress to stderr")
        for dest in flags:
            kw = dict(_FLAGS[dest])
            kw["default"] = getattr(config, dest)
            p.add_argument("--" + RunConfig.key(dest), dest=dest, **kw)
        p.set_defaults(func=func)
    return parser


def _config_path(argv: list[str]) -> str | None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    return known.config or os.environ.get(CONFIG_ENV) or None


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        path = _config_path(argv)
        config = RunConfig.load(path) if path else RunConfig()
    except (OSError, ShopDemandError, TypeError) as exc:
        print(f"shopdemand: error: {_describe(exc)}", file=sys.stderr)
        return 1
    parser = build_parser(config)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        _subparser(parser, args.command).print_usage(sys.stderr)
        print(f"shopdemand {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ShopDemandError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"shopdemand {args.command}: error: {_describe(exc)}", file=sys.stderr)
        return 1


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if name in getattr(action, "choices", {}):
            return action.choices[name]
    return parser


def _describe(exc: BaseException) -> str:
    if isinstance(exc, OSError) and exc.filename is not None:
        return f"{exc.strerror or exc.__class__.__name__}: {exc.filename}"
    if isinstance(exc, KeyError):
        return f"missing key {exc}"
    msg = str(exc).splitlines()[0] if str(exc) else ""
    return f"{exc.__class__.__name__}: {msg}" if msg else exc.__class__.__name__


if __name__ == "__main__":
    sys.exit(main())
