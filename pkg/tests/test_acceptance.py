"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (the lines are repeated in the terminal summary) or
directly with ``python3 tests/test_acceptance.py [N ...]``.
"""

import functools
import itertools
import json
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES, dense_normalized_laplacian, random_connected_graph, random_hypergraph  # noqa: E402

from phasegraph.cli import main as cli_main
from phasegraph.config import apply_overrides, load_config
from phasegraph.errors import ConvergenceError
from phasegraph.graph import laplacian
from phasegraph.hypergraph import hypergraph_laplacian, hypergraph_quadratic_form
from phasegraph.multiclass import (
    MulticlassFidelity, init_multiclass, multiclass_potential_gradient, run_multiclass, simplex_project,
    step_multiclass_nonsmooth, step_multiclass_smooth,
)
from phasegraph.pipeline import run_segmentation
from phasegraph.scalar import FidelitySet, ScalarState, SolverConfig, run_scalar, step_smooth
from phasegraph.spectral import SpectralBasis, smallest_eigenpairs

CONFIGS = Path(__file__).parents[1] / "configs"


def _config(name, **over):
    cfg = load_config(CONFIGS / name)
    return apply_overrides(cfg, {k.replace("__", "."): str(v) for k, v in over.items()}) if over else cfg


def _run(name, **over):
    return run_segmentation(_config(name, **over)).metrics


def _inversions(seq):
    return sum(b > a for a, b in zip(seq, seq[1:]))


# --------------------------------------------------------------------------


def criterion_1():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(30):
        n = int(rng.integers(10, 61))
        if i < 20:
            g, W = random_connected_graph(n, rng)
            op, dense = laplacian(g), dense_normalized_laplacian(W)
        else:
            h, H, w = random_hypergraph(n, rng)
            d = H @ w
            theta = (H / np.sqrt(d)[:, None]) @ np.diag(w / H.sum(axis=0)) @ (H / np.sqrt(d)[:, None]).T
            op, dense = hypergraph_laplacian(h), np.eye(n) - theta
        lam = smallest_eigenpairs(op, 10).lam
        worst = max(worst, float(np.abs(lam - scipy.linalg.eigvalsh(dense)[:10]).max()))
    elapsed = time.perf_counter() - t0
    return worst <= 1e-8 and elapsed < 10, f"max eigenvalue error {worst:.2e} (tol 1e-8), {elapsed:.2f} s (limit 10 s)"


def criterion_2():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 51))
        h, H, w = random_hypergraph(n, rng, max_size=8)
        u = rng.normal(size=n)
        d = H @ w
        theta = (H / np.sqrt(d)[:, None]) @ np.diag(w / H.sum(axis=0)) @ (H / np.sqrt(d)[:, None]).T
        quad = u @ (u - theta @ u)
        worst = max(worst, abs(hypergraph_quadratic_form(h, u) - quad) / (1 + abs(quad)))
    return worst <= 1e-11, f"max relative deviation {worst:.2e} over 100 pairs (tol 1e-11)"


def _qp_projection(v):
    best, best_d = None, np.inf
    for r in range(1, v.size + 1):
        for S in itertools.combinations(range(v.size), r):
            S = list(S)
            x = np.zeros(v.size)
            x[S] = v[S] - (v[S].sum() - 1.0) / r
            if x.min() >= -1e-14 and np.sum((x - v) ** 2) < best_d:
                best, best_d = np.maximum(x, 0), np.sum((x - v) ** 2)
    return best


def criterion_3():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        v = rng.normal(0.2, 1.0, int(rng.integers(1, 6)))
        worst = max(worst, float(np.abs(simplex_project(v) - _qp_projection(v)).max()))
    return worst <= 1e-10, f"max deviation from QP enumeration {worst:.2e} over 1000 vectors (tol 1e-10)"


@functools.lru_cache(maxsize=None)
def _image_runs():
    t0 = time.perf_counter()
    ns, sm = _run("image_nonsmooth.ini"), _run("image_smooth.ini")
    return ns, sm, time.perf_counter() - t0


def criterion_4():
    ns, sm, elapsed = _image_runs()
    ok = ns["foc"] == 1.0 and ns["foc"] > sm["foc"] and elapsed < 300
    return ok, (f"non-smooth FOC {ns['foc']:.6f} ({ns['misclassification']} wrong), smooth FOC {sm['foc']:.6f} "
                f"({sm['misclassification']} wrong), {elapsed:.0f} s (limit 300 s)")


def criterion_5():
    ns, sm, _ = _image_runs()
    ok = ns["overshoot"] <= 5e-3 and sm["overshoot"] > 0.1
    return ok, f"non-smooth overshoot {ns['overshoot']:.3e} (<= 5e-3), smooth overshoot {sm['overshoot']:.3f} (> 0.1)"


def criterion_6():
    base = {"input__n_total": 200, "graph__R": 7, "spectral__m": 10, "solver__t_max": 300, "sample__n_per_class": 5}
    over = []
    for k in range(2, 8):
        over.append(_run("two_moons.ini", solver__nu_min=f"1e-{k}", **base)["overshoot"])
    ok = all(b <= a + 1e-12 for a, b in zip(over, over[1:]))
    return ok, "terminal overshoot for nu_min 1e-2..1e-7: " + ", ".join(f"{v:.2e}" for v in over)


def criterion_7():
    seeds = range(10)
    means = {}
    for pot in ("smooth", "nonsmooth"):
        for n_s in (10, 20, 30, 40, 50):
            vals = [_run("two_moons.ini", solver__potential=pot, sample__n_per_class=n_s, sample__seed=s)["misclassification"] for s in seeds]
            means[pot, n_s] = float(np.mean(vals))
    rate_ok = all(means[p, 10] < 300 for p in ("smooth", "nonsmooth"))
    trends = {p: [means[p, k] for k in (10, 20, 30, 40, 50)] for p in ("smooth", "nonsmooth")}
    trend_ok = all(_inversions(t) <= 1 for t in trends.values())
    detail = "; ".join(f"{p} means {', '.join(f'{v:.1f}' for v in t)}" for p, t in trends.items())
    return rate_ok and trend_ok, f"of 3000 for n_sample 10..50 ({detail}); n_sample=10 must be < 300"


def criterion_8():
    means = {pot: float(np.mean([_run("four_corners.ini", solver__potential=pot, sample__seed=s)["misclassification"] for s in range(10)]))
             for pot in ("smooth", "nonsmooth")}
    return all(v <= 200 for v in means.values()), f"10-seed mean misclassified of 2000: smooth {means['smooth']:.1f}, non-smooth {means['nonsmooth']:.1f} (<= 200)"


def criterion_9():
    rng = np.random.default_rng(9)
    cfg = SolverConfig(potential="nonsmooth", t_max=5)
    solves, worst, failures = 0, 0, []
    for i in range(100):
        n = int(rng.integers(10, 41))
        g, _ = random_connected_graph(n, rng)
        basis = smallest_eigenpairs(laplacian(g), int(rng.integers(2, min(n, 15))))
        idx = rng.choice(n, 4, replace=False)
        try:
            if i % 2 == 0:
                fid = FidelitySet(idx, [1, 1, -1, -1], omega0=float(rng.choice([1.0, 1e2, 1e4])))
                state = ScalarState.from_vertex_values(rng.uniform(-1.5, 1.5, n), basis)
                _, diag = run_scalar(state, basis, fid, cfg)
                counts = diag.column("newton_iters")
                solves += len(cfg.nu_schedule) * diag.steps
            else:
                fid = MulticlassFidelity(idx, [1, 2, 3, 3], K=3, omega0=float(rng.choice([1.0, 1e2])))
                _, diag = run_multiclass(init_multiclass(n, 3, fid, seed=i), basis, fid, cfg)
                counts = np.array([int(k) for r in diag.rows for k in r["newton_by_class"].split(";")])
                solves += 3 * len(cfg.nu_schedule) * diag.steps
            worst = max(worst, int(counts.max()))
        except ConvergenceError as exc:
            failures.append(f"instance {i}: {exc}")
    ok = not failures
    return ok, f"{solves} solves on 100 instances, no stop-rule failure, worst {worst} iterations per step (l_max 20)" if ok else "; ".join(failures[:3])


def criterion_10():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(3, 31))
        g, W = random_connected_graph(n, rng)
        L = dense_normalized_laplacian(W)
        lam, phi = scipy.linalg.eigh(L)
        basis = SpectralBasis(lam, phi)
        eps, tau, omega0 = 0.5, 0.05, 2.0
        cfg = SolverConfig(epsilon=eps, tau=tau)
        c = cfg.resolve_c(omega0)
        idx = rng.choice(n, 3, replace=False)
        B = (1 + c * tau) * np.eye(n) + eps * tau * L

        fid = FidelitySet(idx, [1, -1, 1], omega0=omega0)
        ub = rng.uniform(-1.2, 1.2, n)
        new = step_smooth(ScalarState.from_vertex_values(ub, basis), basis, fid, cfg).u
        rhs = -(tau / eps) * (ub ** 3 - ub) + (1 + c * tau) * ub + tau * fid.omega(n) * (fid.target(n) - ub)
        worst = max(worst, float(np.abs(new - np.linalg.solve(B, rhs)).max()))

        mf = MulticlassFidelity(idx, [1, 2, 3], K=3, omega0=omega0)
        Ub = init_multiclass(n, 3, mf, seed=int(rng.integers(1000)))
        newU = step_multiclass_smooth(Ub, basis, mf, cfg).U
        R = (1 + c * tau) * Ub.U - (tau / (2 * eps)) * multiclass_potential_gradient(Ub.U) + tau * mf.omega(n)[:, None] * (mf.target(n) - Ub.U)
        worst = max(worst, float(np.abs(newU - simplex_project(np.linalg.solve(B, R))).max()))
    return worst <= 1e-12, f"max deviation from dense vertex-space steps {worst:.2e} on 20 graphs (tol 1e-12)"


def criterion_11():
    sizes = (20, 40, 60, 80, 100)
    means = [float(np.mean([_run("mushroom.ini", sample__n_per_class=k, sample__seed=s)["misclassification"] for s in range(5)])) for k in sizes]
    ok = _inversions(means) <= 1 and means[-1] < means[0]
    return ok, "5-seed mean misclassified of 4062 for n_sample 20..100: " + ", ".join(f"{v:.1f}" for v in means)


def criterion_12():
    tmp = Path(tempfile.mkdtemp())
    try:
        results = []
        for name, over in (("two_moons.ini", ["sample.seed=3"]),
                           ("four_corners.ini", ["input.n_total=400", "spectral.m=20", "solver.t_max=50"]),
                           ("mushroom.ini", ["input.rows=300", "solver.t_max=50"])):
            first, second = tmp / name / "a", tmp / name / "b"
            sets = [a for o in over for a in ("--set", o)]
            if cli_main(["segment", str(CONFIGS / name), "--output-dir", str(first), *sets]) != 0:
                return False, f"{name}: first run failed"
            code = cli_main(["segment", str(first / "manifest.json"), "--check", "--output-dir", str(second)])
            same = (first / "labels.csv").read_bytes() == (second / "labels.csv").read_bytes()
            results.append((name, code == 0 and same))
        return all(ok for _, ok in results), ", ".join(f"{n}: {'identical' if ok else 'DIFFERENT'}" for n, ok in results)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 13)}


def report(i):
    passed, detail = CRITERIA[i]()
    line = f"CRITERION {i}: {'PASS' if passed else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed, line


SLOW = {7, 8, 11}


@pytest.mark.parametrize("i", [pytest.param(i, marks=pytest.mark.slow) if i in SLOW else i for i in CRITERIA])
def test_criterion(i):
    passed, line = report(i)
    assert passed, line


if __name__ == "__main__":
    chosen = [int(a) for a in sys.argv[1:]] or list(CRITERIA)
    sys.exit(0 if all([report(i)[0] for i in chosen]) else 1)
