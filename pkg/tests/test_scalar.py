import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from phasegraph.errors import ConvergenceError, ParameterError
from phasegraph.graph import WeightedGraph, laplacian
from phasegraph.scalar import (
    FidelitySet, ScalarState, SolverConfig, active_sets, classify_scalar, energy, initial_state,
    relative_change, run_scalar, smooth_potential, smooth_potential_derivative, ssn_solve_scalar,
    step_nonsmooth, step_smooth, theta_nu,
)
from phasegraph.spectral import SpectralBasis

from conftest import dense_normalized_laplacian, random_connected_graph

NO_FID = FidelitySet([], [], omega0=0.0)


def point_basis():
    return SpectralBasis(np.array([0.0]), np.array([[1.0]]))


def full_basis(W):
    L = dense_normalized_laplacian(W)
    lam, phi = scipy.linalg.eigh(L)
    return L, SpectralBasis(np.clip(lam, 0, None) if False else lam, phi)


def dense_ssn(L, ubar, fid, cfg, nu, u0):
    """Plain semi-smooth Newton in vertex space (no projection, no line search)."""
    n = len(ubar)
    a = cfg.resolve_c(fid.omega0) + 1 / cfg.tau
    A = a * np.eye(n) + cfg.epsilon * L
    b = (1 / cfg.epsilon + a) * ubar + fid.omega(n) * (fid.target(n) - ubar)
    u = u0.copy()
    for _ in range(100):
        plus, minus = u > 1, u < -1
        act = plus | minus
        new = np.linalg.solve(A + np.diag(act / nu), b + (plus.astype(float) - minus) / nu)
        if np.array_equal(new, u) or np.array_equal((new > 1) | (new < -1), act) and np.allclose(new, u, atol=0, rtol=0):
            break
        if np.array_equal(new > 1, plus) and np.array_equal(new < -1, minus):
            u = new
            break
        u = new
    return u


class TestPointwise:
    def test_potential_derivative(self, rng):
        np.testing.assert_array_equal(smooth_potential_derivative([1.0, -1.0, 0.0]), [0, 0, 0])
        assert smooth_potential_derivative(2.0) == 6.0
        u = rng.uniform(-2, 2, 50)
        h = 1e-5
        fd = (smooth_potential(u + h) - smooth_potential(u - h)) / (2 * h)
        np.testing.assert_allclose(smooth_potential_derivative(u), fd, atol=1e-6)

    def test_theta(self):
        np.testing.assert_array_equal(theta_nu(np.linspace(-1, 1, 7), 0.1), np.zeros(7))
        assert theta_nu(1.5, 0.1) == pytest.approx(5.0)
        assert theta_nu(-2.0, 0.5) == pytest.approx(-2.0)
        with pytest.raises(ParameterError):
            theta_nu(0.0, 0.0)

    def test_active_sets(self):
        A, plus, minus = active_sets([-2.0, 0.0, 2.0])
        np.testing.assert_array_equal(A, [True, False, True])
        np.testing.assert_array_equal(plus, [False, False, True])
        np.testing.assert_array_equal(minus, [True, False, False])
        assert not active_sets([1.0, -1.0])[0].any()
        assert active_sets([1 + 1e-12])[1][0]

    def test_classify(self):
        np.testing.assert_array_equal(classify_scalar(np.array([0.3, -0.7])), [1, -1])
        np.testing.assert_array_equal(classify_scalar(np.array([0.0])), [1])
        np.testing.assert_array_equal(classify_scalar(np.array([-1.0003, 1.0001])), [-1, 1])

    def test_relative_change(self):
        assert relative_change([1.0, 1.0], [1.0, 1.0]) == 0.0
        assert relative_change([0.0], [0.0]) == 0.0
        assert relative_change([1.0], [0.0]) == np.inf
        assert relative_change([3.0, 0.0], [1.0, -2.0], "max") == pytest.approx(1.0)


class TestTypes:
    def test_fidelity_validation(self):
        with pytest.raises(ParameterError):
            FidelitySet([0, 0], [1, 1])
        with pytest.raises(ParameterError):
            FidelitySet([0], [0.5])
        with pytest.raises(ParameterError):
            FidelitySet([0], [1], omega0=-1)
        with pytest.raises(ParameterError):
            FidelitySet([5], [1]).omega(3)

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            SolverConfig(nu_schedule=(1e-2, 1e-1))
        with pytest.raises(ParameterError):
            SolverConfig(epsilon=0)
        with pytest.raises(ParameterError):
            SolverConfig(potential="quartic")
        assert SolverConfig(epsilon=0.5).resolve_c(1.0) == 7.0
        assert SolverConfig().nu_schedule == tuple(10.0 ** -k for k in range(1, 8))


class TestSmoothStep:
    def test_fixed_points(self):
        b = point_basis()
        cfg = SolverConfig(epsilon=0.5, tau=0.01, c=5)
        for v in (1.0, -1.0, 0.0):
            s = step_smooth(ScalarState.from_vertex_values([v], b), b, NO_FID, cfg)
            assert s.u[0] == pytest.approx(v, abs=1e-15)

    def test_K2_dense(self):
        W = np.array([[0, 1.0], [1, 0]])
        L, b = full_basis(W)
        cfg = SolverConfig(epsilon=0.5, tau=0.01, c=5)
        ubar = np.array([0.5, -0.5])
        s = step_smooth(ScalarState.from_vertex_values(ubar, b), b, NO_FID, cfg)
        rhs = -(0.01 / 0.5) * (ubar ** 3 - ubar) + (1 + 0.05) * ubar
        dense = np.linalg.solve((1 + 0.05) * np.eye(2) + 0.5 * 0.01 * L, rhs)
        np.testing.assert_allclose(s.u, dense, atol=1e-12)

    def test_full_basis_equivalence(self, rng):
        for _ in range(10):
            n = int(rng.integers(3, 31))
            _, W = random_connected_graph(n, rng)
            L, b = full_basis(W)
            idx = rng.choice(n, 2, replace=False)
            fid = FidelitySet(idx, [1, -1], omega0=3.0)
            cfg = SolverConfig(epsilon=0.3, tau=0.05)
            c = cfg.resolve_c(3.0)
            ubar = rng.uniform(-1, 1, n)
            s = step_smooth(ScalarState.from_vertex_values(ubar, b), b, fid, cfg)
            rhs = -(cfg.tau / cfg.epsilon) * (ubar ** 3 - ubar) + (1 + c * cfg.tau) * ubar + cfg.tau * fid.omega(n) * (fid.target(n) - ubar)
            dense = np.linalg.solve((1 + c * cfg.tau) * np.eye(n) + cfg.epsilon * cfg.tau * L, rhs)
            np.testing.assert_allclose(s.u, dense, atol=1e-12)


class TestNewton:
    def test_single_vertex_root(self):
        b = point_basis()
        cfg = SolverConfig(epsilon=0.5, tau=0.01, c=5, potential="nonsmooth", eps_abs=1e-10)
        a = 5 + 1 / 0.01
        for nu in (1e-1, 1e-4, 1e-7):
            sol = ssn_solve_scalar([1.0], b, NO_FID, cfg, nu, [1.0])
            assert sol.u[0] == pytest.approx(1 + (1 / 0.5) / (a + 1 / nu), rel=1e-13)

    def test_inactive_converges_in_one_step(self, rng):
        _, W = random_connected_graph(12, rng)
        _, b = full_basis(W)
        cfg = SolverConfig(potential="nonsmooth")
        ubar = rng.uniform(-0.2, 0.2, 12)
        sol = ssn_solve_scalar(ubar, b, NO_FID, cfg, 1e-3, ubar)
        assert sol.iterations == 1
        assert np.abs(sol.u).max() <= 1

    def test_K2_matches_dense_oracle(self, rng):
        W = np.array([[0, 1.0], [1, 0]])
        L, b = full_basis(W)
        cfg = SolverConfig(epsilon=0.5, tau=0.01, potential="nonsmooth", eps_abs=1e-13)
        fid = FidelitySet([0], [1], omega0=1.0)
        for _ in range(20):
            ubar = rng.uniform(-1.5, 1.5, 2)
            for nu in (1e-1, 1e-3, 1e-7):
                sol = ssn_solve_scalar(ubar, b, fid, cfg, nu, ubar)
                ref = dense_ssn(L, ubar, fid, cfg, nu, ubar)
                np.testing.assert_allclose(sol.u, ref, atol=1e-10)

    def test_full_space_oracle_random(self, rng):
        for _ in range(10):
            n = int(rng.integers(4, 15))
            _, W = random_connected_graph(n, rng)
            L, b = full_basis(W)
            cfg = SolverConfig(epsilon=0.4, tau=0.02, potential="nonsmooth", eps_abs=1e-12)
            fid = FidelitySet([0, 1], [1, -1], omega0=2.0)
            ubar = rng.uniform(-1.2, 1.2, n)
            sol = ssn_solve_scalar(ubar, b, fid, cfg, 1e-2, ubar)
            ref = dense_ssn(L, ubar, fid, cfg, 1e-2, ubar)
            np.testing.assert_allclose(sol.u, ref, atol=1e-9)

    def test_iteration_cap(self, rng):
        _, W = random_connected_graph(20, rng)
        _, b = full_basis(W)
        cfg = SolverConfig(potential="nonsmooth", l_max=1, eps_abs=0.0, eps_rel=0.0)
        ubar = rng.uniform(-3, 3, 20)
        with pytest.raises(ConvergenceError, match="l_max=1"):
            ssn_solve_scalar(ubar, b, NO_FID, cfg, 1e-7, np.zeros(20))

    def test_cg_matches_direct(self, rng):
        _, W = random_connected_graph(20, rng)
        _, b = full_basis(W)
        ubar = rng.uniform(-1.5, 1.5, 20)
        sols = [ssn_solve_scalar(ubar, b, NO_FID, SolverConfig(potential="nonsmooth", linear_solver=ls, eps_abs=1e-12), 1e-3, ubar)
                for ls in ("direct", "conjugate_gradient")]
        np.testing.assert_allclose(sols[0].u, sols[1].u, atol=1e-9)

    def test_continuation_warm_start(self, rng):
        _, W = random_connected_graph(25, rng)
        _, b = full_basis(W)
        b = b.truncate(8)
        cfg = SolverConfig(potential="nonsmooth")
        state = ScalarState.from_vertex_values(rng.uniform(-1.3, 1.3, 25), b)
        new, its = step_nonsmooth(state, b, NO_FID, cfg)
        assert len(its) == 7 and all(1 <= k <= 20 for k in its)


class TestRun:
    def test_stops_after_one_step(self):
        b = point_basis()
        cfg = SolverConfig(eps_tol=1.0, c=5)
        s, d = run_scalar(ScalarState.from_vertex_values([1.0], b), b, NO_FID, cfg)
        assert d.steps == 1 and d.converged
        assert list(d.rows[0]) == ["step", "rel_change", "energy", "min_u", "max_u", "newton_iters"]

    def test_initial_state(self, rng):
        _, W = random_connected_graph(10, rng)
        _, b = full_basis(W)
        fid = FidelitySet([2, 5], [1, -1])
        s = initial_state(10, fid, b)
        expected = np.zeros(10)
        expected[[2, 5]] = [1, -1]
        np.testing.assert_allclose(s.u, expected, atol=1e-14)

    def test_smooth_energy_decreases(self, rng):
        X = np.r_[rng.normal(0, 0.3, (40, 2)), rng.normal(2, 0.3, (40, 2))]
        from phasegraph.graph import zmp_weights
        from phasegraph.spectral import smallest_eigenpairs
        b = smallest_eigenpairs(laplacian(zmp_weights(X, 7)), 6)
        fid = FidelitySet([0, 1, 40, 41], [-1, -1, 1, 1], omega0=1.0)
        cfg = SolverConfig(epsilon=0.5, tau=0.01, t_max=200)
        s0 = initial_state(80, fid, b)
        s, d = run_scalar(s0, b, fid, cfg)
        E = np.r_[energy(s0.u, b, fid, cfg), d.column("energy")]
        assert np.all(np.diff(E) <= 1e-8 * np.abs(E[:-1]))
        truth = np.r_[-np.ones(40), np.ones(40)]
        assert np.mean(classify_scalar(s) == truth) >= 0.95

    def test_nonsmooth_run_bounds(self, rng):
        X = np.r_[rng.normal(0, 0.3, (40, 2)), rng.normal(2, 0.3, (40, 2))]
        from phasegraph.graph import zmp_weights
        from phasegraph.spectral import smallest_eigenpairs
        b = smallest_eigenpairs(laplacian(zmp_weights(X, 7)), 6)
        fid = FidelitySet([0, 40], [-1, 1], omega0=1e3)
        cfg = SolverConfig(epsilon=0.5, tau=0.01, t_max=100, potential="nonsmooth")
        s, d = run_scalar(initial_state(80, fid, b), b, fid, cfg)
        assert np.abs(s.u).max() <= 1.01
        np.testing.assert_array_equal(classify_scalar(s)[[0, 40]], [-1, 1])
        assert d.column("newton_iters").min() >= 7
