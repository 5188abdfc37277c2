"""Command-line experiment runner.

    sarpu run   --config exp.json [--out DIR] [--jobs N]
    sarpu sweep --config exp.json --grid grid.json [--out DIR] [--jobs N]
    sarpu label --data in.csv --mechanism mech.json --seed S --out out.csv

``run`` evaluates every configured method with the repeated k-fold protocol
and writes ``results.csv`` (one row per method/seed/fold cell) and
``summary.csv`` (mean and sd per method). ``sweep`` repeats ``run`` over a
grid of mechanism parameters.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .errors import ConfigError, SarpuError
from .eval import METHODS, CellResult, mean_sd, run_cell
from .optimizer import OptimizerConfig
from .pu_data import (
    Dataset,
    OneVarSAR,
    SCARLabeling,
    ThreeVarSAR,
    apply_mechanism,
    bundled_path,
    load_csv,
    make_synthetic,
    save_csv,
    subsample_for_imbalance,
)
from .sarem import EmConfig

log = logging.getLogger("sarpu")

OUTPUT_ENV = "SARPU_OUTPUT_DIR"
DEFAULT_OUTPUT = "sarpu-out"
DEFAULT_SEEDS = (0, 1, 2, 3, 4)

RESULT_FIELDS = [
    "dataset", "method", "mechanism", "c", "c_bar", "delta_c", "seed", "fold",
    "f1", "abs_prior_error", "propensity_mae", "propensity_mse", "iterations", "converged",
]
SUMMARY_METRICS = ["f1", "abs_prior_error", "propensity_mae", "propensity_mse"]
SUMMARY_FIELDS = ["dataset", "method", "mechanism", "c", "c_bar", "delta_c", "n"] + [
    f"{m}_{stat}" for m in SUMMARY_METRICS for stat in ("mean", "sd")
]
TRACE_FIELDS = ["iteration", "mean_propensity", "log_likelihood", "observed_log_likelihood"]
GRID_KEYS = {"scar": ("c",), "one_var": ("c_bar", "delta_c"), "three_var": ("p_on", "p_off")}


@dataclass
class ExperimentConfig:
    dataset: dict
    mechanism: dict
    methods: list
    em: EmConfig = field(default_factory=EmConfig)
    seeds: tuple = DEFAULT_SEEDS
    folds: int = 5
    propensity_attributes: list | None = None
    output_dir: str | None = None
    traces: bool = False
    base_dir: Path = Path(".")


def _require(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise ConfigError(f"{where}: missing field {key!r}")
    if not isinstance(doc[key], kind):
        raise ConfigError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    return doc[key]


def parse_config(doc: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    known = {"dataset", "mechanism", "methods", "em", "seeds", "folds",
             "propensity_attributes", "output_dir", "traces"}
    extra = sorted(set(doc) - known)
    if extra:
        raise ConfigError(f"config: unknown field {extra[0]!r}")
    dataset = _require(doc, "dataset", dict, "config")
    mechanism = _require(doc, "mechanism", dict, "config")
    methods = _require(doc, "methods", list, "config")
    if not methods:
        raise ConfigError("config.methods: empty method list")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"config.methods: unknown method {m!r} (known: {', '.join(METHODS)})")
    seeds = doc.get("seeds", list(DEFAULT_SEEDS))
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("config.seeds: expected a non-empty list of integers")
    folds = doc.get("folds", 5)
    if not isinstance(folds, int) or folds < 2:
        raise ConfigError("config.folds: expected an integer >= 2")
    attrs = doc.get("propensity_attributes")
    if attrs is not None and not isinstance(attrs, list):
        raise ConfigError("config.propensity_attributes: expected a list")
    return ExperimentConfig(dataset, mechanism, list(methods), parse_em(doc.get("em", {})),
                            tuple(seeds), folds, attrs, doc.get("output_dir"),
                            bool(doc.get("traces", False)), base_dir)


def parse_em(doc: dict) -> EmConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config.em: expected an object")
    opt_keys = {"l2", "grad_tol", "max_iter"}
    em_keys = {"decay", "window", "slope_threshold", "max_iterations", "warm_start"}
    for k in doc:
        if k not in opt_keys | em_keys:
            raise ConfigError(f"config.em: unknown field {k!r}")
    try:
        opt = OptimizerConfig(**{k: v for k, v in doc.items() if k in opt_keys})
        return EmConfig(optimizer=opt, **{k: v for k, v in doc.items() if k in em_keys})
    except (SarpuError, TypeError) as exc:
        raise ConfigError(f"config.em: {exc}") from None


def load_dataset(doc: dict, base_dir: Path = Path(".")) -> Dataset:
    where = "config.dataset"
    truth = doc.get("truth_column", "y")
    label = doc.get("label_column")
    if "path" in doc:
        path = Path(doc["path"])
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"{where}.path: file not found: {path}")
        ds = load_csv(path, label, truth, rescale=bool(doc.get("rescale", False)),
                      name=doc.get("name"))
    elif "bundled" in doc:
        path = bundled_path(doc["bundled"])
        if not path.exists():
            raise ConfigError(f"{where}.bundled: no bundled dataset {doc['bundled']!r}")
        ds = load_csv(path, None, "y", name=doc.get("name", doc["bundled"]))
    elif "synthetic" in doc:
        params = doc["synthetic"]
        if not isinstance(params, dict):
            raise ConfigError(f"{where}.synthetic: expected an object")
        try:
            ds = make_synthetic(**params)
        except TypeError as exc:
            raise ConfigError(f"{where}.synthetic: {exc}") from None
        if "name" in doc:
            ds = replace(ds, name=doc["name"])
    else:
        raise ConfigError(f"{where}: one of 'path', 'bundled' or 'synthetic' is required")
    sub = doc.get("subsample")
    if sub is not None:
        if not isinstance(sub, dict):
            raise ConfigError(f"{where}.subsample: expected an object")
        ds = subsample_for_imbalance(ds, int(sub.get("class", 1)), float(sub.get("fraction", 0.3)),
                                     int(sub.get("seed", 0)))
    return ds


def parse_mechanism(doc: dict, ds: Dataset | None = None):
    """Build a labeling mechanism; attributes may be column indices or names."""
    where = "mechanism"
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    kind = doc.get("type")

    def col(c):
        return ds.column_index(c) if ds is not None else int(c)

    try:
        if kind == "scar":
            return SCARLabeling(float(_require(doc, "c", (int, float), where)))
        if kind == "one_var":
            return OneVarSAR(col(_require(doc, "attribute", (int, str), where)),
                             float(_require(doc, "c_bar", (int, float), where)),
                             float(_require(doc, "delta_c", (int, float), where)))
        if kind == "three_var":
            attrs = _require(doc, "attributes", list, where)
            return ThreeVarSAR(tuple(col(a) for a in attrs), float(doc.get("p_on", 0.9)),
                               float(doc.get("p_off", 0.5)))
    except ConfigError:
        raise
    except (SarpuError, ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}.type: unknown mechanism type {kind!r} "
                      "(known: scar, one_var, three_var)")


def _mech_columns(mech) -> dict:
    d = mech.describe()
    return {
        "mechanism": d["mechanism"],
        "c": d.get("c", ""),
        "c_bar": d.get("c_bar", ""),
        "delta_c": d.get("delta_c", ""),
    }


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_one(args):
    return run_cell(*args)


def evaluate(cfg: ExperimentConfig, jobs: int = 1, mechanism_doc: dict | None = None,
             ds: Dataset | None = None):
    """Run every (method, seed, fold) cell; returns (dataset, mechanism, cells)."""
    if ds is None:
        ds = load_dataset(cfg.dataset, cfg.base_dir)
    if ds.y is None:
        raise ConfigError("config.dataset: ground-truth column is required for evaluation")
    mech = parse_mechanism(mechanism_doc or cfg.mechanism, ds)
    selector = None
    if cfg.propensity_attributes is not None:
        selector = tuple(ds.column_index(c) for c in cfg.propensity_attributes)
    tasks = [(ds, mech, m, cfg.em, seed, fold, cfg.folds, selector)
             for m in cfg.methods for seed in cfg.seeds for fold in range(cfg.folds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_one, tasks))
    else:
        cells = [_run_one(t) for t in tasks]
    return ds, mech, cells


def result_rows(ds: Dataset, mech, cells: list[CellResult]) -> list[dict]:
    base = {"dataset": ds.name, **_mech_columns(mech)}
    rows = []
    for c in cells:
        rows.append({**base, "method": c.method, "seed": c.seed, "fold": c.fold, "f1": c.f1,
                     "abs_prior_error": c.abs_prior_error, "propensity_mae": c.propensity_mae,
                     "propensity_mse": c.propensity_mse, "iterations": c.iterations,
                     "converged": c.converged})
    return rows


def summary_rows(rows: list[dict]) -> list[dict]:
    keys = ["dataset", "method", "mechanism", "c", "c_bar", "delta_c"]
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key, members in groups.items():
        rec = dict(zip(keys, key))
        rec["n"] = len(members)
        for m in SUMMARY_METRICS:
            rec[f"{m}_mean"], rec[f"{m}_sd"] = mean_sd(r[m] for r in members)
        out.append(rec)
    return out


def write_csv(path: Path, fields: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(_nan_to_none(r.get(f))) for f in fields])


def _nan_to_none(v):
    if isinstance(v, float) and v != v:
        return None
    return v


def write_traces(out: Path, cells: list[CellResult], prefix: str = "") -> None:
    for c in cells:
        if not c.trace:
            continue
        rows = [{f: getattr(t, f) for f in TRACE_FIELDS} for t in c.trace]
        write_csv(out / f"trace_{prefix}{c.method}_{c.seed}_{c.fold}.csv", TRACE_FIELDS, rows)


def output_dir(cfg: ExperimentConfig, override: str | None) -> Path:
    out = Path(override or cfg.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_experiment(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> list[dict]:
    ds, mech, cells = evaluate(cfg, jobs)
    rows = result_rows(ds, mech, cells)
    write_csv(out / "results.csv", RESULT_FIELDS, rows)
    write_csv(out / "summary.csv", SUMMARY_FIELDS, summary_rows(rows))
    if cfg.traces:
        write_traces(out, cells)
    return rows


def expand_grid(grid: dict, mechanism: dict) -> list[dict]:
    """Mechanism documents for the Cartesian product of the grid values."""
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("grid: expected a non-empty object of parameter lists")
    allowed = GRID_KEYS.get(mechanism.get("type"), ())
    for k, v in grid.items():
        if k not in allowed:
            raise ConfigError(f"grid.{k}: not a parameter of mechanism {mechanism.get('type')!r}")
        if not isinstance(v, list) or not v:
            raise ConfigError(f"grid.{k}: expected a non-empty list")
    keys = list(grid)
    return [{**mechanism, **dict(zip(keys, combo))}
            for combo in itertools.product(*(grid[k] for k in keys))]


def sweep(cfg: ExperimentConfig, grid: dict, out: Path, jobs: int = 1) -> list[dict]:
    points = expand_grid(grid, cfg.mechanism)
    ds = load_dataset(cfg.dataset, cfg.base_dir)
    # validate every grid point before spending time on any of them
    for p in points:
        parse_mechanism(p, ds)
    rows = []
    for i, point in enumerate(points):
        ds, mech, cells = evaluate(cfg, jobs, point, ds)
        rows.extend(result_rows(ds, mech, cells))
        if cfg.traces:
            write_traces(out, cells, prefix=f"g{i}_")
    write_csv(out / "results.csv", RESULT_FIELDS, rows)
    write_csv(out / "summary.csv", SUMMARY_FIELDS, summary_rows(rows))
    return rows


def label_command(data: str, mechanism: str, seed: int, out: str,
                  truth_column: str = "y", label_column: str = "s") -> Dataset:
    ds = load_csv(data, None, truth_column)
    if ds.y is None:
        raise ConfigError(f"{data}: truth column {truth_column!r} is required")
    mech_path = Path(mechanism)
    doc = _read_json(mech_path) if mech_path.exists() else _loads(mechanism, "mechanism")
    mech = parse_mechanism(doc, ds)
    labeled = ds.with_labels(apply_mechanism(ds.y, ds.features, mech, seed))
    save_csv(labeled, out, label_column, truth_column)
    return labeled


def _loads(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _read_json(path: Path):
    if not path.exists():
        raise ConfigError(f"{path}: file not found")
    return _loads(path.read_text(encoding="utf-8"), str(path))


def load_config(path: str) -> ExperimentConfig:
    p = Path(path)
    return parse_config(_read_json(p), p.parent)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sarpu", description="PU learning experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate methods on one configuration")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.add_argument("--jobs", type=int, default=1)

    sw = sub.add_parser("sweep", help="repeat run over a mechanism parameter grid")
    sw.add_argument("--config", required=True)
    sw.add_argument("--grid", required=True)
    sw.add_argument("--out")
    sw.add_argument("--jobs", type=int, default=1)

    lab = sub.add_parser("label", help="inject PU labels into a CSV with ground truth")
    lab.add_argument("--data", required=True)
    lab.add_argument("--mechanism", required=True, help="JSON file or inline JSON object")
    lab.add_argument("--seed", type=int, required=True)
    lab.add_argument("--out", required=True)
    lab.add_argument("--truth-column", default="y")
    lab.add_argument("--label-column", default="s")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "label":
            label_command(args.data, args.mechanism, args.seed, args.out,
                          args.truth_column, args.label_column)
            return 0
        if args.jobs < 1:
            raise ConfigError("--jobs: expected a positive integer")
        cfg = load_config(args.config)
        out = output_dir(cfg, args.out)
        if args.command == "run":
            run_experiment(cfg, out, args.jobs)
        else:
            sweep(cfg, _read_json(Path(args.grid)), out, args.jobs)
        return 0
    except (SarpuError, OSError) as exc:
        print(f"sarpu: error: {exc}".splitlines()[0], file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
