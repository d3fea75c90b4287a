"""Clustering protocol, configuration handling and CSV reports.

A run repeatedly samples ``K`` categories from a labeled dataset, fits one
method on the normalized subset with rank ``K + 1``, clusters the learned
representation with cosine K-means and scores it against the sampled labels.
Grid searches and ablations reuse the same protocol cell by cell.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from .baselines import ccf_fit, cf_fit
from .data import (
    DataMatrix,
    GroundTruth,
    generate_synthetic_blobs,
    load_dense_csv,
    load_idx,
    normalize_columns,
    split_semi_supervised,
)
from .errors import ArtifactNotFoundError, ConfigError, InputError
from .evaluation import evaluate_clustering, kmeans_cosine
from .factorization import Hyperparams
from .solver import SolverConfig, TRACE_COLUMNS, fit, transform

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

GRID_VALUES = [10.0 ** e for e in range(-5, 6)]
ABLATE_LAYERS = list(range(1, 11))
ABLATE_PROPORTIONS = [round(0.1 * i, 1) for i in range(1, 10)]
METHODS = ("ds2cf", "cf", "ccf")
DATASETS = ("synthetic", "csv", "idx")

# key -> default; the default's type is the accepted type
DEFAULTS = {
    "dataset": "synthetic",
    "data_path": "",
    "labels_path": "",
    "orientation": "rows-are-samples",
    "label_column": "last",
    "synth_classes": 5,
    "synth_per_class": 40,
    "synth_dim": 64,
    "synth_separation": 1.0,
    "synth_noise": 0.6,
    "synth_seed": 0,
    "method": "ds2cf",
    "K": 3,
    "labeled_proportion": 0.4,
    "alpha": 0.1,
    "beta": 1e-4,
    "gamma": 1e-3,
    "layers": 3,
    "ranks": [],
    "epsilon": 1e-3,
    "max_iters": 200,
    "repeats": 10,
    "seed": 0,
    "kmeans_restarts": 30,
    "workers": 1,
    "save_artifacts": True,
    "grid_values": GRID_VALUES,
    "ablate_layers": ABLATE_LAYERS,
    "ablate_proportions": ABLATE_PROPORTIONS,
}

REPEAT_COLUMNS = ["config_hash", "method", "repeat", "categories", "accuracy", "f_measure",
                  "layer_iterations"]
SUMMARY_COLUMNS = ["config_hash", "method", "K", "repeats", "accuracy_mean", "accuracy_std",
                   "f_measure_mean", "f_measure_std"]
GRID_COLUMNS = ["config_hash", "stage", "alpha", "beta", "gamma", "accuracy_mean", "f_measure_mean"]
ABLATE_COLUMNS = ["config_hash", "axis", "value", "accuracy_mean", "accuracy_std",
                  "f_measure_mean", "f_measure_std"]


# ---------------------------------------------------------------- configuration

def _type_ok(value, default):
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, list):
        return isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    return isinstance(value, type(default))


def validate_config(raw: dict, base_dir=None) -> dict:
    """Merge ``raw`` over the defaults and check every field.

    All problems are collected and raised together as one ``ConfigError``.
    Relative paths are resolved against ``base_dir``.
    """
    problems = []
    cfg = {k: (list(v) if isinstance(v, list) else v) for k, v in DEFAULTS.items()}
    for key, value in raw.items():
        if key not in DEFAULTS:
            problems.append(f"unknown key {key!r}")
            continue
        default = DEFAULTS[key]
        if key == "label_column" and (isinstance(value, int) and not isinstance(value, bool)):
            cfg[key] = value
            continue
        if not _type_ok(value, default):
            problems.append(f"{key}: expected {type(default).__name__}, got {type(value).__name__}")
            continue
        cfg[key] = float(value) if isinstance(default, float) else value

    def need(cond, msg):
        if not cond:
            problems.append(msg)

    need(cfg["dataset"] in DATASETS, f"dataset must be one of {', '.join(DATASETS)}")
    need(cfg["method"] in METHODS, f"method must be one of {', '.join(METHODS)}")
    need(cfg["K"] >= 2, "K must be at least 2")
    p = cfg["labeled_proportion"]
    need(0 < p <= 1, "labeled_proportion must lie in (0, 1]")
    for name in ("alpha", "beta", "gamma"):
        need(math.isfinite(cfg[name]) and cfg[name] >= 0, f"{name} must be a finite nonnegative number")
    need(cfg["layers"] >= 1, "layers must be at least 1")
    if cfg["ranks"]:
        need(len(cfg["ranks"]) == cfg["layers"], "ranks must list one rank per layer")
        need(all(isinstance(r, int) and r >= 1 for r in cfg["ranks"]), "ranks must be positive integers")
    need(cfg["epsilon"] > 0, "epsilon must be positive")
    need(cfg["max_iters"] >= 1, "max_iters must be at least 1")
    need(cfg["repeats"] >= 1, "repeats must be at least 1")
    need(cfg["kmeans_restarts"] >= 1, "kmeans_restarts must be at least 1")
    need(cfg["workers"] >= 1, "workers must be at least 1")
    need(cfg["orientation"] in ("rows-are-samples", "columns-are-samples"),
         "orientation must be rows-are-samples or columns-are-samples")
    lc = cfg["label_column"]
    need(lc in ("first", "last") or isinstance(lc, int), "label_column must be 'first', 'last' or an integer")
    need(len(cfg["grid_values"]) >= 1 and all(v >= 0 for v in cfg["grid_values"]),
         "grid_values must be nonnegative and non-empty")
    need(len(cfg["ablate_layers"]) >= 1 and all(isinstance(v, int) and v >= 1 for v in cfg["ablate_layers"]),
         "ablate_layers must be positive integers")
    need(len(cfg["ablate_proportions"]) >= 1 and all(0 < v <= 1 for v in cfg["ablate_proportions"]),
         "ablate_proportions must lie in (0, 1]")
    if cfg["dataset"] == "synthetic":
        need(cfg["synth_classes"] >= 2, "synth_classes must be at least 2")
        need(cfg["synth_per_class"] >= 1, "synth_per_class must be at least 1")
        need(cfg["synth_dim"] >= cfg["synth_classes"], "synth_dim must be at least synth_classes")
        need(cfg["synth_noise"] >= 0, "synth_noise must be nonnegative")
        need(cfg["synth_classes"] >= cfg["K"], "synth_classes must be at least K")

    base = Path(base_dir) if base_dir is not None else Path.cwd()
    for key in ("data_path", "labels_path"):
        if cfg[key]:
            cfg[key] = str((base / cfg[key]).resolve())
    if cfg["dataset"] in ("csv", "idx"):
        need(bool(cfg["data_path"]), f"data_path is required for dataset {cfg['dataset']}")
        if cfg["data_path"]:
            need(Path(cfg["data_path"]).is_file(), f"data_path does not exist: {cfg['data_path']}")
    if cfg["dataset"] == "idx":
        need(bool(cfg["labels_path"]), "labels_path is required for dataset idx")
        if cfg["labels_path"]:
            need(Path(cfg["labels_path"]).is_file(), f"labels_path does not exist: {cfg['labels_path']}")
    if cfg["dataset"] == "csv":
        need(cfg["orientation"] == "rows-are-samples", "a csv dataset needs rows-are-samples with a label column")

    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path=None, seed=None) -> dict:
    """Read a flat TOML file (or use defaults) and apply a ``--seed`` override."""
    raw = {}
    base = None
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError([f"config file not found: {path}"])
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"cannot parse {path}: {exc}"]) from exc
        nested = [k for k, v in raw.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError([f"tables are not supported (found [{k}])" for k in nested])
        base = path.parent
    if seed is not None:
        raw = dict(raw, seed=int(seed))
    return validate_config(raw, base)


def config_hash(cfg) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def header_lines(cfg, extra=()):
    lines = [f"config_hash = {config_hash(cfg)}"]
    lines += [f"{k} = {json.dumps(cfg[k])}" for k in sorted(cfg)]
    lines += list(extra)
    return lines


def write_csv(path, headers, columns, rows):
    with open(path, "w", newline="") as fh:
        for line in headers:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# ---------------------------------------------------------------- protocol

def load_dataset(cfg):
    """Return ``(values D x N, raw integer labels)`` for the configured dataset."""
    kind = cfg["dataset"]
    if kind == "synthetic":
        x, truth = generate_synthetic_blobs(cfg["synth_classes"], cfg["synth_per_class"], cfg["synth_dim"],
                                            cfg["synth_separation"], cfg["synth_noise"], cfg["synth_seed"])
    elif kind == "csv":
        x, truth = load_dense_csv(cfg["data_path"], cfg["orientation"], cfg["label_column"])
    else:
        x, truth = load_idx(cfg["data_path"], cfg["labels_path"])
    n_classes = np.unique(truth.raw_labels).size
    if n_classes < cfg["K"]:
        raise InputError(f"dataset has {n_classes} classes, fewer than K={cfg['K']}")
    return np.asarray(x.values), np.asarray(truth.raw_labels)


def repeat_seed(master, rep) -> int:
    """Per-repeat integer seed derived from ``(master seed, repeat index)``."""
    return int(np.random.SeedSequence([int(master), int(rep)]).generate_state(1)[0])


def sample_categories(labels, k, master, rep):
    classes = np.unique(labels)
    rng = np.random.default_rng([int(master), int(rep)])
    return np.sort(rng.choice(classes, size=k, replace=False))


@dataclass
class RepeatOutcome:
    repeat: int
    categories: tuple
    accuracy: float
    f_measure: float
    f_class: float | None
    layer_iterations: tuple
    artifacts: dict | None = None


def run_repeat(values, labels, cfg, rep, with_class_f=False, keep_artifacts=False) -> RepeatOutcome:
    """One protocol repeat: sample categories, fit, cluster, score."""
    k = cfg["K"]
    cats = sample_categories(labels, k, cfg["seed"], rep)
    idx = np.flatnonzero(np.isin(labels, cats))
    x = normalize_columns(DataMatrix(values[:, idx]))
    truth = GroundTruth.from_raw(labels[idx])
    seed = repeat_seed(cfg["seed"], rep)
    ranks = tuple(cfg["ranks"]) if cfg["ranks"] else (k + 1,) * cfg["layers"]
    method = cfg["method"]
    artifacts = None
    iters = ()
    if method == "cf":
        res = cf_fit(x, ranks[-1], cfg["max_iters"], cfg["epsilon"], seed)
        rep_mat = res.v
        iters = (res.iterations,)
    else:
        split = split_semi_supervised(truth, cfg["labeled_proportion"], seed)
        if method == "ccf":
            res = ccf_fit(x, split, ranks[-1], cfg["max_iters"], cfg["epsilon"], seed)
            rep_mat = res.representation()
            iters = (res.iterations,)
        else:
            conf = SolverConfig(Hyperparams(cfg["alpha"], cfg["beta"], cfg["gamma"]), ranks,
                                cfg["epsilon"], cfg["max_iters"], seed)
            res = fit(x, split, conf)
            rep_mat = transform(res)
            iters = tuple(res.layer_iterations)
            if keep_artifacts:
                artifacts = {
                    "sv": res.graphs.s_v,
                    "q": res.constraints.q,
                    "trace": [r.row() for r in res.trace],
                    "working_labels": np.concatenate(
                        [split.labels, truth.labels[split.unlabeled_indices]]),
                    "n_labeled": split.l,
                }
    if keep_artifacts:
        artifacts = dict(artifacts or {}, representation=rep_mat)
    clus = kmeans_cosine(rep_mat, k, cfg["kmeans_restarts"], seed=seed)
    report = evaluate_clustering(clus.assignment, truth.labels, with_class_f)
    return RepeatOutcome(rep, tuple(int(c) for c in cats), float(report.accuracy), float(report.f_measure),
                         report.f_class, iters, artifacts)


def _pool_map(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _repeat_job(rep, values, labels, cfg, with_class_f, keep):
    return run_repeat(values, labels, cfg, rep, with_class_f, keep)


def run_protocol(cfg, values=None, labels=None, with_class_f=False, keep_artifacts=False):
    """All repeats of one configuration, in repeat order."""
    if values is None:
        values, labels = load_dataset(cfg)
    job = partial(_repeat_job, values=values, labels=labels, cfg=cfg, with_class_f=with_class_f,
                  keep=keep_artifacts)
    return _pool_map(job, range(cfg["repeats"]), cfg["workers"])


def _stats(vals):
    vals = np.asarray(vals, dtype=float)
    return float(vals.mean()), float(vals.std())


def summarize(outcomes):
    ac = _stats([o.accuracy for o in outcomes])
    f = _stats([o.f_measure for o in outcomes])
    fc = None
    if outcomes and outcomes[0].f_class is not None:
        fc = _stats([o.f_class for o in outcomes])
    return ac, f, fc


# ---------------------------------------------------------------- commands

def _prepare_out(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(cfg, out, with_class_f=False):
    """Run the protocol and write ``repeats.csv``, ``summary.csv`` and artifacts."""
    out = _prepare_out(out)
    values, labels = load_dataset(cfg)
    keep = cfg["save_artifacts"]
    outcomes = run_protocol(cfg, values, labels, with_class_f, keep)
    h = config_hash(cfg)
    heads = header_lines(cfg)
    cols = list(REPEAT_COLUMNS) + (["f_class"] if with_class_f else [])
    rows = []
    for o in outcomes:
        row = [h, cfg["method"], o.repeat, " ".join(map(str, o.categories)), o.accuracy, o.f_measure,
               " ".join(map(str, o.layer_iterations))]
        if with_class_f:
            row.append(o.f_class)
        rows.append(row)
    write_csv(out / "repeats.csv", heads, cols, rows)

    ac, f, fc = summarize(outcomes)
    scols = list(SUMMARY_COLUMNS) + (["f_class_mean", "f_class_std"] if with_class_f else [])
    srow = [h, cfg["method"], cfg["K"], len(outcomes), ac[0], ac[1], f[0], f[1]]
    if with_class_f:
        srow += [fc[0], fc[1]]
    write_csv(out / "summary.csv", heads, scols, [srow])

    if keep:
        art = out / "artifacts"
        art.mkdir(exist_ok=True)
        for o in outcomes:
            _save_artifacts(art, o, heads)
    return outcomes


def _save_artifacts(art_dir, outcome, heads):
    a = outcome.artifacts
    tag = f"repeat_{outcome.repeat:03d}"
    arrays = {"representation": a["representation"], "header": np.array(heads)}
    if "sv" in a:
        arrays.update(sv=a["sv"], q=a["q"], working_labels=a["working_labels"],
                      n_labeled=np.array(a["n_labeled"]))
        write_csv(art_dir / f"{tag}_trace.csv", heads + [f"repeat = {outcome.repeat}"], TRACE_COLUMNS,
                  a["trace"])
    np.savez(art_dir / f"{tag}.npz", **arrays)


def grid_cells(values):
    """Stage-one cells: every ``(alpha, beta)`` pair with ``gamma = 1``."""
    return [(a, b, 1.0) for a in values for b in values]


def _cell_job(hyper, values, labels, cfg):
    cell = dict(cfg, alpha=hyper[0], beta=hyper[1], gamma=hyper[2], workers=1)
    outcomes = [run_repeat(values, labels, cell, rep) for rep in range(cfg["repeats"])]
    ac, f, _ = summarize(outcomes)
    return ac[0], f[0]


def cmd_grid(cfg, out):
    """Two-stage search: ``alpha x beta`` at ``gamma = 1``, then a ``gamma`` sweep.

    Writes ``grid.csv`` (one row per cell) and ``grid_best.csv`` (the argmax
    cell by mean accuracy; ties go to the earliest cell).
    """
    out = _prepare_out(out)
    values, labels = load_dataset(cfg)
    cfg = dict(cfg, method="ds2cf")
    job = partial(_cell_job, values=values, labels=labels, cfg=cfg)
    grid = cfg["grid_values"]
    stage1 = grid_cells(grid)
    res1 = _pool_map(job, stage1, cfg["workers"])
    best1 = max(range(len(stage1)), key=lambda i: (res1[i][0], -i))
    a_best, b_best, _ = stage1[best1]
    stage2 = [(a_best, b_best, g) for g in grid]
    res2 = _pool_map(job, stage2, cfg["workers"])

    h = config_hash(cfg)
    rows = [[h, 1, *cell, *r] for cell, r in zip(stage1, res1)]
    rows += [[h, 2, *cell, *r] for cell, r in zip(stage2, res2)]
    heads = header_lines(cfg)
    write_csv(out / "grid.csv", heads, GRID_COLUMNS, rows)
    best = max(range(len(rows)), key=lambda i: (rows[i][5], -i))
    write_csv(out / "grid_best.csv", heads, GRID_COLUMNS, [rows[best]])
    return rows, rows[best]


def _ablate_job(value, axis, values, labels, cfg):
    if axis == "layers":
        cell = dict(cfg, layers=int(value), ranks=[], workers=1)
    else:
        cell = dict(cfg, labeled_proportion=float(value), workers=1)
    outcomes = [run_repeat(values, labels, cell, rep) for rep in range(cfg["repeats"])]
    ac, f, _ = summarize(outcomes)
    return ac, f


def cmd_ablate(cfg, out, axis):
    """Sweep the number of layers or the labeled proportion; writes ``ablate_<axis>.csv``."""
    if axis not in ("layers", "labeled_proportion"):
        raise ConfigError([f"unknown ablation axis {axis!r}"])
    out = _prepare_out(out)
    values, labels = load_dataset(cfg)
    points = cfg["ablate_layers"] if axis == "layers" else cfg["ablate_proportions"]
    job = partial(_ablate_job, axis=axis, values=values, labels=labels, cfg=cfg)
    res = _pool_map(job, points, cfg["workers"])
    h = config_hash(cfg)
    rows = [[h, axis, v, ac[0], ac[1], f[0], f[1]] for v, (ac, f) in zip(points, res)]
    write_csv(out / f"ablate_{axis}.csv", header_lines(cfg, [f"axis = {axis}"]), ABLATE_COLUMNS, rows)
    return rows


ARTIFACTS = ("sv", "q", "trace", "representation")


def cmd_export(run_dir, artifact, out=None, repeat=0):
    """Write one stored artifact of a run as CSV and return the output path."""
    if artifact not in ARTIFACTS:
        raise ConfigError([f"artifact must be one of {', '.join(ARTIFACTS)}"])
    art = Path(run_dir) / "artifacts"
    tag = f"repeat_{int(repeat):03d}"
    out = Path(out) if out is not None else Path(run_dir) / f"export_{artifact}_{tag}.csv"
    if artifact == "trace":
        src = art / f"{tag}_trace.csv"
        if not src.is_file():
            raise ArtifactNotFoundError(f"no trace stored for {tag} in {run_dir}")
        out.write_bytes(src.read_bytes())
        return out
    npz = art / f"{tag}.npz"
    if not npz.is_file():
        raise ArtifactNotFoundError(f"no artifacts stored for {tag} in {run_dir}")
    with np.load(npz) as data:
        if artifact not in data.files:
            raise ArtifactNotFoundError(f"artifact {artifact!r} not stored for {tag} (method without it?)")
        mat = data[artifact]
        heads = [str(s) for s in data["header"]] + [f"repeat = {int(repeat)}", f"artifact = {artifact}"]
        if artifact in ("sv", "q"):
            heads += [f"n_labeled = {int(data['n_labeled'])}",
                      "rows and columns in working order: labeled samples first",
                      "working_labels = " + " ".join(str(int(v)) for v in data["working_labels"])]
        else:
            heads.append("rows in original sample order")
    cols = [f"c{j}" for j in range(mat.shape[1])]
    write_csv(out, heads, cols, [[float(v) for v in row] for row in mat])
    return out


def cmd_synth(cfg, out):
    """Write the configured synthetic blobs as a samples-by-features CSV with a trailing label column."""
    x, truth = generate_synthetic_blobs(cfg["synth_classes"], cfg["synth_per_class"], cfg["synth_dim"],
                                        cfg["synth_separation"], cfg["synth_noise"], cfg["synth_seed"])
    out = Path(out)
    if out.parent:
        out.parent.mkdir(parents=True, exist_ok=True)
    keys = [k for k in sorted(cfg) if k.startswith("synth_")]
    heads = [f"{k} = {json.dumps(cfg[k])}" for k in keys]
    cols = [f"f{i}" for i in range(x.D)] + ["label"]
    rows = [[float(v) for v in x.values[:, j]] + [int(truth.labels[j])] for j in range(x.N)]
    write_csv(out, heads, cols, rows)
    return out
