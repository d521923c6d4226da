"""Command-line pipeline: train, evaluate, refine, export.

Every subcommand reads options from flags and, optionally, a ``key=value``
config file (flags win over the file, the file wins over defaults), writes
all artifacts under ``--out``, and finishes by writing ``manifest.json``
recording the resolved configuration and the produced files. Outputs contain
no timestamps, so a rerun with the same inputs is byte-identical.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, Dataset, load_csv, split_folds, standardize
from .metrics import evaluate, population_survival
from .model import NumericalError, TrainConfig, fit
from .refinement import apply_merge, combine_clusters, correlation_matrix
from .serialize import load_model, save_model

__all__ = ["UsageError", "main"]


class UsageError(Exception):
    """Bad flags, config keys, or option values; exits with code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


_UNSET = object()


def _parse_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_floats(text: str) -> list:
    return [float(part) for part in str(text).split(",") if part.strip()]


def _parse_ints(text: str) -> list:
    return [int(part) for part in str(text).split(",") if part.strip()]


def _parse_paths(text: str) -> list:
    return [part.strip() for part in str(text).split(",") if part.strip()]


@dataclass
class Option:
    name: str                 # config key and flag name (underscores)
    parse: object             # value parser, also applied to config values
    default: object = None
    required: bool = False
    help: str = ""


_TRAIN_FIELDS = [
    Option("subgroups", int, 100, help="number of latent subgroups"),
    Option("hidden", int, 100, help="hidden width of all networks"),
    Option("depth", int, 3, help="hidden blocks per network"),
    Option("batch_size", int, 512, help="mini-batch size"),
    Option("integral_samples", int, 64,
           help="Monte Carlo samples for the cumulative-hazard integral"),
    Option("lr", float, 1e-3, help="Adam learning rate"),
    Option("epochs", int, 100, help="maximum training epochs"),
    Option("patience", int, 10, help="early-stopping patience (epochs)"),
    Option("dropout", float, 0.0, help="hidden-layer dropout probability"),
    Option("w_orth", float, 1.0, help="assignment-diversity regularizer weight"),
    Option("w_ent", float, 1.0, help="importance-entropy regularizer weight"),
    Option("weight_decay", float, 0.0, help="L2 penalty on parameters"),
    Option("layer_norm", _parse_bool, True, help="normalize hidden blocks"),
    Option("add_const", _parse_bool, False,
           help="learnable constant on hazard-head preactivations"),
    Option("joint", _parse_bool, False,
           help="debug mode: one joint step instead of two decoupled phases"),
]

_OPTIONS = {
    "train": [
        Option("data", str, required=True, help="training CSV file"),
        Option("time", str, required=True, help="follow-up time column"),
        Option("event", str, required=True, help="event indicator column"),
        Option("out", str, required=True, help="output directory"),
        Option("folds", int, 5, help="number of cross-validation folds"),
        Option("standardize", _parse_bool, True,
               help="standardize covariates with per-fold training stats"),
        Option("seed", int, 0, help="master seed for splits and training"),
        *_TRAIN_FIELDS,
    ],
    "evaluate": [
        Option("data", str, required=True, help="dataset CSV file"),
        Option("time", str, required=True, help="follow-up time column"),
        Option("event", str, required=True, help="event indicator column"),
        Option("models", _parse_paths, required=True,
               help="comma-separated model files, one per fold"),
        Option("out", str, required=True, help="output directory"),
        Option("folds", int, 5, help="fold count used at training time"),
        Option("seed", int, 0, help="master seed used at training time"),
        Option("quantiles", _parse_floats, [0.25, 0.5, 0.75],
               help="event-time quantiles defining horizons"),
        Option("samples", int, 64, help="Monte Carlo samples per prediction"),
    ],
    "refine": [
        Option("model", str, required=True, help="trained model file"),
        Option("out", str, required=True, help="output directory"),
        Option("threshold", float, 0.8,
               help="similarity cutoff for merging subgroups"),
        Option("data", str, default=None,
               help="CSV whose rows weight merged importance rows "
                    "(typically the training data)"),
        Option("time", str, default=None, help="follow-up time column"),
        Option("event", str, default=None, help="event indicator column"),
    ],
    "export": [
        Option("model", str, required=True, help="trained model file"),
        Option("out", str, required=True, help="output directory"),
        Option("data", str, default=None,
               help="CSV for subgroup means and patient lookups"),
        Option("time", str, default=None, help="follow-up time column"),
        Option("event", str, default=None, help="event indicator column"),
        Option("patients", _parse_ints, [],
               help="comma-separated row indices to export individually"),
        Option("time_points", int, 50, help="time grid size for curves"),
        Option("t_max", float, None,
               help="curve grid endpoint (default: the training time scale)"),
        Option("sweep_points", int, 5,
               help="covariate sweep values per population curve"),
        Option("sweep_min", float, -2.0,
               help="sweep range start, in standardized units"),
        Option("sweep_max", float, 2.0,
               help="sweep range end, in standardized units"),
        Option("samples", int, 64, help="Monte Carlo samples per curve"),
        Option("seed", int, 0, help="seed for curve sampling"),
    ],
}

_SUMMARY = {
    "train": "fit one model per cross-validation fold",
    "evaluate": "score per-fold models on their test sets",
    "refine": "merge similar subgroups of a trained model",
    "export": "write plot-ready interpretability tables",
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="adham",
                     description="additive-hazards mixture survival modeling")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    for name, options in _OPTIONS.items():
        p = sub.add_parser(name, help=_SUMMARY[name], prog=f"adham {name}")
        p.error = parser.error
        p.add_argument("--config", default=None,
                       help="key=value file supplying option defaults")
        for opt in options:
            flag = "--" + opt.name.replace("_", "-")
            p.add_argument(flag, dest=opt.name, type=str, default=_UNSET,
                           help=opt.help + (" (required)" if opt.required
                                            else f" (default: {opt.default})"))
    return parser


def _read_config_file(path: str) -> dict:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve(name: str, args: argparse.Namespace) -> dict:
    options = {opt.name: opt for opt in _OPTIONS[name]}
    resolved = {key: opt.default for key, opt in options.items()}

    def apply(key, raw, source):
        if key not in options:
            raise UsageError(f"unknown option {key!r} for 'adham {name}' ({source})")
        try:
            resolved[key] = options[key].parse(raw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key!r} ({source}): {exc}") from exc

    if args.config is not None:
        for key, raw in _read_config_file(args.config).items():
            apply(key, raw, f"config file {args.config}")
    for key in options:
        raw = getattr(args, key)
        if raw is not _UNSET:
            apply(key, raw, "command line")
    missing = [k for k, opt in options.items()
               if opt.required and resolved[k] is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise UsageError(f"adham {name}: missing required option(s): {flags}")
    return resolved


# ---- shared helpers ----


def _load_dataset(cfg: dict) -> Dataset:
    for key in ("time", "event"):
        if cfg.get(key) is None:
            raise UsageError(f"--data requires --{key}")
    try:
        return load_csv(cfg["data"], time_col=cfg["time"], event_col=cfg["event"])
    except OSError as exc:
        raise DataError(f"cannot read {cfg['data']}: {exc}") from exc


def _load_model(path: str):
    try:
        return load_model(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _check_features(model, data: Dataset, path: str) -> None:
    if list(model.feature_names) != list(data.feature_names):
        missing = [n for n in model.feature_names if n not in data.feature_names]
        extra = [n for n in data.feature_names if n not in model.feature_names]
        parts = [f"model {path} expects covariates {model.feature_names}",
                 f"dataset has {data.feature_names}"]
        if missing:
            parts.append(f"missing: {missing}")
        if extra:
            parts.append(f"unexpected: {extra}")
        raise DataError("; ".join(parts))


def _model_inputs(model, data: Dataset) -> np.ndarray:
    if model.stats is None:
        return data.x
    return (data.x - model.stats.mean) / model.stats.std


def _fold_seeds(seed: int, k: int) -> list:
    return [int(child.generate_state(1)[0])
            for child in np.random.SeedSequence(seed).spawn(k)]


def _cell(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n",
                    encoding="utf-8")


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


class _OutputDir:
    def __init__(self, cfg: dict, command: str):
        self.root = Path(cfg["out"])
        self.root.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.names = []

    def path(self, name: str) -> Path:
        self.names.append(name)
        return self.root / name

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "package_version": __version__,
            "config": {k: v for k, v in sorted(self.cfg.items())},
            "outputs": sorted(self.names),
        }
        _write_json(self.root / "manifest.json", manifest)


# ---- subcommands ----


def _run_train(cfg: dict) -> int:
    data = _load_dataset(cfg)
    k = cfg["folds"]
    if k < 2:
        raise UsageError("train needs at least 2 folds")
    folds = split_folds(data, k=k, seed=cfg["seed"])
    seeds = _fold_seeds(cfg["seed"], k)
    out = _OutputDir(cfg, "train")

    for i, fold in enumerate(folds):
        try:
            train_cfg = TrainConfig(
                seed=seeds[i],
                **{opt.name: cfg[opt.name] for opt in _TRAIN_FIELDS},
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        if cfg["standardize"]:
            _, stats = standardize(data.subset(fold.train_idx))
            fitted, _ = standardize(data, stats)
        else:
            fitted, stats = data, None
        result = fit(fitted, fold, train_cfg, stats=stats)
        save_model(result.model, out.path(f"model_fold{i}.adham"))
        _write_json(out.path(f"training_log_fold{i}.json"), {
            "fold": i,
            "config": {k_: v for k_, v in sorted(cfg.items())},
            "fold_seed": seeds[i],
            "history": result.history,
            "best_epoch": result.best_epoch,
            "stopped_epoch": result.stopped_epoch,
        })
    out.finish()
    return 0


def _sem(values: list):
    defined = [v for v in values if v is not None]
    if len(defined) < 2:
        return None
    return float(np.std(defined, ddof=1) / np.sqrt(len(defined)))


def _mean(values: list):
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    return float(np.mean(defined))


def _run_evaluate(cfg: dict) -> int:
    data = _load_dataset(cfg)
    models = [_load_model(p) for p in cfg["models"]]
    folds = split_folds(data, k=cfg["folds"], seed=cfg["seed"])
    if len(models) > len(folds):
        raise UsageError(
            f"{len(models)} models given but only {len(folds)} folds configured")
    seeds = _fold_seeds(cfg["seed"], len(models))
    out = _OutputDir(cfg, "evaluate")

    reports = []
    for i, (model, path) in enumerate(zip(models, cfg["models"])):
        _check_features(model, data, path)
        transformed = Dataset(_model_inputs(model, data), data.time, data.event,
                              data.feature_names)
        report = evaluate(model, transformed, folds[i],
                          quantiles=tuple(cfg["quantiles"]),
                          n_samples=cfg["samples"], seed=seeds[i], fold_id=i)
        reports.append(report)
        out.path(f"report_fold{i}.csv").write_text(report.to_csv(),
                                                   encoding="utf-8")
        out.path(f"report_fold{i}.json").write_text(report.to_json() + "\n",
                                                    encoding="utf-8")

    header = ["quantile", "horizon_time", "c_index_mean", "c_index_sem",
              "brier_mean", "brier_sem", "auroc_mean", "auroc_sem"]
    rows = []
    for qi, q in enumerate(cfg["quantiles"]):
        per_fold = [r.rows[qi] for r in reports]
        row = [float(q), _mean([r["horizon_time"] for r in per_fold])]
        for key in ("c_index", "brier", "auroc"):
            values = [r[key] for r in per_fold]
            row.extend([_mean(values), _sem(values)])
        rows.append(row)
    _write_csv(out.path("summary.csv"), header, rows)
    out.finish()
    return 0


def _run_refine(cfg: dict) -> int:
    if not 0.0 < cfg["threshold"] <= 1.0:
        raise UsageError(f"threshold must be in (0, 1], got {cfg['threshold']}")
    model = _load_model(cfg["model"])
    sample_x = None
    if cfg["data"] is not None:
        data = _load_dataset(cfg)
        _check_features(model, data, cfg["model"])
        sample_x = _model_inputs(model, data)
    rho_before = correlation_matrix(model.importance_matrix())
    plan = combine_clusters(rho_before, threshold=cfg["threshold"])
    merged = apply_merge(model, plan, sample_x=sample_x)
    rho_after = correlation_matrix(merged.importance_matrix())

    out = _OutputDir(cfg, "refine")
    save_model(merged, out.path("model_refined.adham"))
    _write_json(out.path("refine_report.json"), {
        "threshold": plan.threshold,
        "subgroups_before": model.n_subgroups,
        "subgroups_after": merged.n_subgroups,
        "groups": plan.groups,
        "lineage": merged.lineage,
    })
    index = [f"g{c}" for c in range(model.n_subgroups)]
    _write_csv(out.path("rho_before.csv"), ["subgroup"] + index,
               [[index[i]] + [float(v) for v in rho_before[i]]
                for i in range(model.n_subgroups)])
    index_after = [f"g{c}" for c in range(merged.n_subgroups)]
    _write_csv(out.path("rho_after.csv"), ["subgroup"] + index_after,
               [[index_after[i]] + [float(v) for v in rho_after[i]]
                for i in range(merged.n_subgroups)])
    out.finish()
    return 0


def _run_export(cfg: dict) -> int:
    model = _load_model(cfg["model"])
    data = None
    if cfg["data"] is not None:
        data = _load_dataset(cfg)
        _check_features(model, data, cfg["model"])
    if cfg["patients"] and data is None:
        raise UsageError("--patients requires --data")
    t_max = cfg["t_max"] if cfg["t_max"] is not None else model.time_scale
    if t_max <= 0:
        raise UsageError("t_max must be positive")
    grid = np.linspace(0.0, t_max, cfg["time_points"])
    sweep = np.linspace(cfg["sweep_min"], cfg["sweep_max"], cfg["sweep_points"])
    out = _OutputDir(cfg, "export")

    # (a) population survival curves, one file per covariate
    for d, name in enumerate(model.feature_names):
        if model.stats is not None:
            raw_values = sweep * model.stats.std[d] + model.stats.mean[d]
        else:
            raw_values = sweep
        rows = []
        hazard = model.hazards[d]
        for j, (z, raw) in enumerate(zip(sweep, raw_values)):
            curve = population_survival(hazard, float(z), grid,
                                        n_samples=cfg["samples"],
                                        rng=np.random.default_rng(
                                            [cfg["seed"], d, j]))
            rows.extend([float(raw), float(t), float(s)]
                        for t, s in zip(curve.times, curve.values))
        _write_csv(out.path(f"population_curve_{d:02d}_{_safe_name(name)}.csv"),
                   [name, "time", "survival"], rows)

    # (b) subgroup-level tables
    beta = model.importance_matrix()
    _write_csv(out.path("importance.csv"),
               ["subgroup"] + list(model.feature_names),
               [[f"g{c}"] + [float(v) for v in beta[c]]
                for c in range(model.n_subgroups)])
    if data is not None:
        probs = model.assignment_probs(_model_inputs(model, data))
        mass = probs.sum(axis=0)
        means = (probs.T @ data.x) / np.where(mass > 0, mass, 1.0)[:, None]
        _write_csv(out.path("subgroup_means.csv"),
                   ["subgroup", "mass"] + list(model.feature_names),
                   [[f"g{c}", float(mass[c] / len(data))]
                    + [float(v) for v in means[c]]
                    for c in range(model.n_subgroups)])

    # (c) per-patient hazard decompositions and assignments
    for idx in cfg["patients"]:
        if not 0 <= idx < len(data):
            raise DataError(
                f"patient index {idx} out of range for {len(data)} records")
        x = _model_inputs(model, data)[idx]
        parts = model.hazard_decomposition(x, grid)
        marginal = parts.sum(axis=0)
        rows = [[float(t)] + [float(v) for v in parts[:, k]]
                + [float(marginal[k])] for k, t in enumerate(grid)]
        _write_csv(out.path(f"patient{idx}_decomposition.csv"),
                   ["time"] + list(model.feature_names) + ["marginal_hazard"],
                   rows)
        assign = np.atleast_1d(model.assignment_probs(x))
        _write_csv(out.path(f"patient{idx}_assignment.csv"),
                   ["subgroup", "probability"],
                   [[f"g{c}", float(p)] for c, p in enumerate(assign)])
    out.finish()
    return 0


_RUNNERS = {
    "train": _run_train,
    "evaluate": _run_evaluate,
    "refine": _run_refine,
    "export": _run_export,
}


def main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand is None:
            raise UsageError("missing subcommand "
                             "(expected train, evaluate, refine, or export)")
        cfg = _resolve(args.subcommand, args)
        return _RUNNERS[args.subcommand](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
