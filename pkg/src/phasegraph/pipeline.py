"""End-to-end runs: data -> graph -> spectral basis -> segmentation -> files.

A run is a pure function of its resolved configuration. The manifest
written next to the outputs stores that configuration, so feeding it back to
:func:`run_segmentation` reproduces the labels byte for byte.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import apply_overrides, nu_schedule, resolve_c, sweep_axes
from .errors import ConfigError, ConfigWarning, PhaseGraphError
from .evaluation import SegmentationResult, foc, misclassification, sample_fidelity, segment_intensities
from .graph import FeatureSet, gaussian_weights, laplacian, zmp_weights
from .hypergraph import CategoricalTable, hyperedges_from_attributes, hypergraph_laplacian
from .ingestion import (
    TableSchema, atomic_write_text, load_image, load_points_csv, load_table, make_four_corners,
    make_mushroom_table, make_two_moons, make_two_region_image, write_csv, write_labels_csv, write_pgm,
)
from .multiclass import MulticlassFidelity, classify_multiclass, init_multiclass, run_multiclass
from .scalar import FidelitySet, SolverConfig, initial_state, overshoot, run_scalar
from .spectral import SpectralBasis, load_basis, save_basis, smallest_eigenpairs

log = logging.getLogger(__name__)

ENV_OUTPUT_DIR = "PHASEGRAPH_OUTPUT_DIR"
ENV_WORKERS = "PHASEGRAPH_WORKERS"


@dataclass
class Problem:
    """Everything about the data a run needs, independent of solver settings."""

    n: int
    features: FeatureSet | None = None
    table: CategoricalTable | None = None
    truth: np.ndarray | None = None
    class_names: tuple = ()
    shape: tuple | None = None
    reference: np.ndarray | None = None


@dataclass
class RunResult:
    labels: np.ndarray
    values: np.ndarray
    diagnostics: object
    metrics: dict
    fidelity: np.ndarray
    resolved: dict
    problem: Problem = field(repr=False, default=None)


def _key(*parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# Problem assembly


def _load_labels(path) -> np.ndarray:
    with open(path) as fh:
        first = fh.readline()
    if first.lower().startswith("vertex"):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return data[:, 1].astype(int)
    return np.loadtxt(path, delimiter=",", ndmin=2).astype(int).ravel()


def _encode(labels):
    """Map arbitrary class values to ``1..K`` in sorted order."""
    labels = np.asarray(labels)
    if labels.dtype.kind in "OUS":
        labels = labels.astype(str)
    names, codes = np.unique(labels, return_inverse=True)
    return codes.ravel() + 1, tuple(str(v) for v in names)


def _image_features(img, mode):
    if mode in ("auto", "channels"):
        return img.features
    if mode == "intensity":
        return FeatureSet(img.intensity.reshape(-1, 1))
    rows, cols = img.shape
    yy, xx = np.mgrid[0:rows, 0:cols]
    pos = np.c_[yy.ravel() / max(rows - 1, 1), xx.ravel() / max(cols - 1, 1)]
    return FeatureSet(np.c_[pos, img.features.points])


_PROBLEMS: dict = {}


def build_problem(cfg: dict) -> Problem:
    """Load or generate the data described by ``cfg['input']`` (memoized per process)."""
    key = _key(cfg["input"], cfg["graph"]["features"])
    if key in _PROBLEMS:
        return _PROBLEMS[key]
    inp = cfg["input"]
    src = inp["source"]
    truth = None
    if src == "two_region_image":
        obs, clean, lab = make_two_region_image(
            inp["size"], inp["radius"], inp["inside"], inp["outside"],
            0.04 if inp["noise"] is None else inp["noise"], inp["data_seed"],
        )
        prob = Problem(obs.size, features=FeatureSet(obs.reshape(-1, 1)), shape=obs.shape, reference=clean.ravel())
        truth = lab.ravel()
    elif src == "image":
        img = load_image(inp["path"])
        prob = Problem(img.features.n, features=_image_features(img, cfg["graph"]["features"]),
                       shape=img.shape, reference=img.intensity.ravel())
    elif src == "points":
        feats, truth = load_points_csv(inp["path"], inp["label_column"])
        prob = Problem(feats.n, features=feats)
    elif src == "two_moons":
        feats, truth = make_two_moons(inp["n_total"] or 3000, 0.1 if inp["noise"] is None else inp["noise"], inp["data_seed"])
        prob = Problem(feats.n, features=feats)
    elif src == "four_corners":
        feats, truth = make_four_corners(inp["n_total"] or 2000, inp["classes"], inp["spread"], inp["data_seed"])
        prob = Problem(feats.n, features=feats)
    else:
        if src == "mushroom":
            table = make_mushroom_table(inp["rows"], inp["data_seed"])
        else:
            table = load_table(inp["path"], TableSchema(inp["label_column"], tuple(inp["columns"]) if inp["columns"] else None, tuple(inp["missing"])))
        prob = Problem(table.n_rows, table=table)
        if table.label_column is not None:
            if np.any(table.missing[:, table.columns.index(table.label_column)]):
                raise ConfigError("label column has missing values", "input.label_column")
            truth = table.labels
    if inp["truth"]:
        truth = _load_labels(inp["truth"])
    if truth is not None:
        truth = np.asarray(truth)
        if truth.size != prob.n:
            raise ConfigError(f"{truth.size} truth labels for {prob.n} vertices", "input.truth")
        prob.truth, prob.class_names = _encode(truth)
    _PROBLEMS[key] = prob
    return prob


def _bin_widths(items):
    out = {}
    for item in items or ():
        col, sep, width = item.rpartition(":")
        if not sep:
            raise ConfigError(f"expected column:width, got {item!r}", "graph.bin_widths")
        try:
            out[col] = float(width)
        except ValueError:
            raise ConfigError(f"bad width in {item!r}", "graph.bin_widths") from None
    return out


def build_operator(cfg: dict, prob: Problem):
    g = cfg["graph"]
    if g["mode"] == "hypergraph":
        if prob.table is None:
            raise ConfigError("hypergraph mode needs a categorical table input", "graph.mode")
        h = hyperedges_from_attributes(prob.table, weight=g["hyperedge_weight"],
                                       missing_as_value=g["missing_as_value"], bin_widths=_bin_widths(g["bin_widths"]))
        return hypergraph_laplacian(h)
    if prob.features is None:
        raise ConfigError("graph mode needs feature vectors", "graph.mode")
    metric = g["metric"]
    if metric == "auto":
        # Pixels compare by the sum of per-channel intensity differences.
        metric = "cityblock" if prob.shape is not None else "euclidean"
    if g["weight"] == "zmp":
        W = zmp_weights(prob.features, g["R"], metric=metric, sparsify=g["sparsify"])
    else:
        W = gaussian_weights(prob.features, g["sigma"], metric=metric, sparsify=g["sparsify"])
    return laplacian(W)


_BASES: dict = {}


def basis_for(cfg: dict, prob: Problem) -> SpectralBasis:
    """Spectral basis for the configured operator, memoized and optionally cached on disk."""
    sp_cfg = {k: v for k, v in cfg["spectral"].items() if k != "cache"}
    key = _key(cfg["input"], cfg["graph"], sp_cfg)
    if key in _BASES:
        return _BASES[key]
    cache = cfg["spectral"]["cache"]
    paths = None
    if cache:
        paths = (Path(cache) / f"{key}.eigenvalues.csv", Path(cache) / f"{key}.eigenvectors.csv")
        if paths[0].exists() and paths[1].exists():
            basis = load_basis(*paths)
            _BASES[key] = basis
            return basis
    op = build_operator(cfg, prob)
    basis = smallest_eigenpairs(op, sp_cfg["m"], tol=sp_cfg["tol"], seed=sp_cfg["seed"], method=sp_cfg["method"])
    if paths:
        paths[0].parent.mkdir(parents=True, exist_ok=True)
        save_basis(basis, *paths)
        # Reload so that cached and fresh runs see identical, round-tripped values.
        basis = load_basis(*paths)
    _BASES[key] = basis
    return basis


# --------------------------------------------------------------------------
# Runs


def solver_config(cfg: dict) -> SolverConfig:
    s = cfg["solver"]
    return SolverConfig(
        epsilon=s["epsilon"], tau=s["tau"], c=resolve_c(s["c"], s["epsilon"], s["omega0"]),
        eps_tol=s["eps_tol"], t_max=s["t_max"], potential=s["potential"],
        nu_schedule=tuple(nu_schedule(s)), l_max=s["l_max"], eps_rel=s["eps_rel"],
        eps_abs=s["eps_abs"], linear_solver=s["linear_solver"], norm=s["norm"],
    )


def _counts(cfg, K):
    counts = cfg["sample"]["n_per_class"]
    if len(counts) == 1:
        return {k: counts[0] for k in range(1, K + 1)}
    if len(counts) != K:
        raise ConfigError(f"{len(counts)} counts given for {K} classes", "sample.n_per_class")
    return {k + 1: c for k, c in enumerate(counts)}


def run_segmentation(cfg: dict) -> RunResult:
    """Run one configured segmentation and compute its metrics (no files written)."""
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    if prob.truth is None:
        raise ConfigError("truth labels are needed to draw fidelity vertices", "input.truth")
    K = int(prob.truth.max())
    if K < 2:
        raise ConfigError("at least two classes are required", "input")
    scheme = cfg["solver"]["scheme"]
    if scheme == "auto":
        scheme = "scalar" if K == 2 else "multiclass"
    if scheme == "scalar" and K != 2:
        raise ConfigError(f"the scalar scheme needs two classes, data has {K}", "solver.scheme")
    basis = basis_for(cfg, prob)
    scfg = solver_config(cfg)
    seed = cfg["sample"]["seed"]
    omega0 = cfg["solver"]["omega0"]
    idx = sample_fidelity(prob.truth, _counts(cfg, K), seed=seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConfigWarning)
        if scheme == "scalar":
            fid = FidelitySet(idx, np.where(prob.truth[idx] == 1, -1.0, 1.0), omega0)
            state, diag = run_scalar(initial_state(prob.n, fid, basis), basis, fid, scfg)
            values = state.u[:, None]
            labels = np.where(state.u >= 0, 2, 1)
        else:
            fid = MulticlassFidelity(idx, prob.truth[idx], K, omega0)
            state, diag = run_multiclass(init_multiclass(prob.n, K, fid, seed), basis, fid, scfg)
            values = state.U
            labels = classify_multiclass(state)
    res = SegmentationResult(labels, prob.truth)
    wrong = misclassification(res)
    metrics = {
        "n": prob.n,
        "classes": K,
        "fidelity_points": int(idx.size),
        "misclassification": wrong,
        "misclassification_unlabelled": misclassification(res, exclude_fidelity=idx),
        "misclassification_rate": wrong / prob.n,
        "steps": diag.steps,
        "converged": diag.converged,
        "newton_iterations": int(diag.column("newton_iters").sum()) if diag.rows else 0,
        "min_value": float(values.min()),
        "max_value": float(values.max()),
        "warnings": sorted({str(w.message) for w in caught}),
    }
    if scheme == "scalar":
        metrics["overshoot"] = overshoot(state.u)
    if prob.reference is not None:
        seg = segment_intensities(prob.reference, labels)
        metrics["foc"] = foc(prob.reference, seg, cfg["output"]["foc_p"], cfg["output"]["foc_q"])
    metrics["runtime_seconds"] = time.perf_counter() - t0
    resolved = {
        "scheme": scheme,
        "c": scfg.c,
        "nu_schedule": list(scfg.nu_schedule),
        "classes": K,
        "class_names": list(prob.class_names),
        "m": basis.m,
        "eigenvalues": [float(v) for v in basis.lam],
    }
    return RunResult(labels, values, diag, metrics, idx, resolved, prob)


def _diagnostics_rows(diag):
    if not diag.rows:
        return [], []
    header = list(diag.rows[0])
    rows = [[repr(r[k]) if isinstance(r[k], float) else r[k] for k in header] for r in diag.rows]
    return header, rows


def write_outputs(result: RunResult, cfg: dict, outdir=None) -> dict:
    """Write labels, diagnostics, metrics and manifest; returns the file map."""
    out = Path(outdir or cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    files = {"labels": "labels.csv", "diagnostics": "diagnostics.csv", "metrics": "metrics.json", "manifest": "manifest.json"}
    if result.resolved["scheme"] == "scalar":
        write_csv(out / files["labels"], ["vertex", "label", "u"],
                  [[i, int(l), repr(float(u))] for i, (l, u) in enumerate(zip(result.labels, result.values[:, 0]))])
    else:
        write_labels_csv(out / files["labels"], result.labels, result.values)
    header, rows = _diagnostics_rows(result.diagnostics)
    write_csv(out / files["diagnostics"], header, rows)
    atomic_write_text(out / files["metrics"], json.dumps(result.metrics, indent=2, sort_keys=True) + "\n")
    if result.problem is not None and result.problem.shape is not None:
        files["image"] = "labels.pgm"
        write_pgm(out / files["image"], result.labels, result.problem.shape, result.resolved["classes"])
    digest = hashlib.sha256((out / files["labels"]).read_bytes()).hexdigest()
    manifest = {
        "tool": "phasegraph",
        "version": __version__,
        "config": cfg,
        "resolved": result.resolved,
        "fidelity_indices": [int(i) for i in result.fidelity],
        "outputs": files,
        "labels_sha256": digest,
    }
    atomic_write_text(out / files["manifest"], json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return {k: str(out / v) for k, v in files.items()}


def apply_environment(cfg: dict, output_dir=None, workers=None) -> dict:
    """Overrides for the output directory and worker count: argument, then environment, then file."""
    over = {}
    out = output_dir or os.environ.get(ENV_OUTPUT_DIR)
    if out:
        over["output.dir"] = out
    w = workers if workers is not None else os.environ.get(ENV_WORKERS)
    if w not in (None, ""):
        over["sweep.workers"] = w
    return apply_overrides(cfg, over) if over else cfg


# --------------------------------------------------------------------------
# Sweeps


def derive_seed(base_seed: int, cell: int, repeat: int) -> int:
    """Seed of sweep run ``(cell, repeat)``: first word of ``SeedSequence([base, cell, repeat])``."""
    return int(np.random.SeedSequence([base_seed, cell, repeat]).generate_state(1, dtype=np.uint32)[0])


def _sweep_task(args):
    cell, repeat, seed, child, save = args
    try:
        result = run_segmentation(child)
        if save:
            write_outputs(result, child)
        return cell, repeat, seed, "ok", result.metrics, ""
    except (PhaseGraphError, ValueError, ArithmeticError) as exc:
        return cell, repeat, seed, "failed", {}, f"{type(exc).__name__}: {exc}"


_SUMMARY_METRICS = ("misclassification", "misclassification_unlabelled", "misclassification_rate", "foc", "steps", "runtime_seconds")


def run_sweep(cfg: dict, outdir=None) -> Path:
    """Run every grid cell ``repeats`` times; write ``summary.csv`` (one row per cell) and ``runs.csv``."""
    out = Path(outdir or cfg["output"]["dir"])
    axes = sweep_axes(cfg)
    sw = cfg["sweep"]
    cells = list(itertools.product(*[vals for _, vals in axes])) if axes else [()]
    tasks = []
    for c, values in enumerate(cells):
        over = {f: v for (f, _), v in zip(axes, values)}
        for r in range(sw["repeats"]):
            seed = derive_seed(sw["base_seed"], c, r)
            child = apply_overrides(cfg, {**over, "sample.seed": seed, "output.dir": str(out / "runs" / f"cell{c:04d}_rep{r:03d}")})
            child["sweep"] = {k: v for k, v in child["sweep"].items() if not k.startswith("axis.")}
            tasks.append((c, r, seed, child, cfg["output"]["save_runs"]))
    if sw["workers"] > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=sw["workers"]) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]

    run_rows = []
    by_cell = {c: [] for c in range(len(cells))}
    for cell, rep, seed, status, metrics, err in results:
        by_cell[cell].append(metrics if status == "ok" else None)
        run_rows.append([cell, rep, seed, status, *[metrics.get(k, "") for k in _SUMMARY_METRICS], err])
        if status != "ok":
            log.warning("cell %d repeat %d failed: %s", cell, rep, err)
    write_csv(out / "runs.csv", ["cell", "repeat", "seed", "status", *_SUMMARY_METRICS, "error"], run_rows)

    header = ["cell", *[f for f, _ in axes], "repeats", "completed", "failed"]
    header += [f"mean_{k}" for k in _SUMMARY_METRICS] + ["std_misclassification"]
    rows = []
    for c, values in enumerate(cells):
        ok = [m for m in by_cell[c] if m is not None]
        row = [c, *values, sw["repeats"], len(ok), sw["repeats"] - len(ok)]
        for k in _SUMMARY_METRICS:
            vals = [m[k] for m in ok if k in m]
            row.append(repr(float(np.mean(vals))) if vals else "")
        mis = [m["misclassification"] for m in ok]
        row.append(repr(float(np.std(mis))) if mis else "")
        rows.append(row)
    write_csv(out / "summary.csv", header, rows)
    return out / "summary.csv"
