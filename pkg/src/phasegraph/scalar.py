"""Two-class diffuse-interface segmentation in a truncated spectral basis.

The phase ``u`` lives in the span of the ``m`` leading eigenvectors ``Phi``
of the normalized Laplacian and evolves by a convexity-split Allen-Cahn step.
Two potentials are available:

* ``smooth``: the double well ``(u**2 - 1)**2 / 4``, treated explicitly;
* ``nonsmooth``: the obstacle potential ``(1 - u**2) / 2`` on ``[-1, 1]``,
  relaxed by a Moreau-Yosida penalty of strength ``1/nu``. Each time step
  solves a piecewise-linear system by semi-smooth Newton iteration with a
  decreasing sequence of penalty parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import cg

from .errors import ConvergenceError, ParameterError
from .spectral import SpectralBasis

DEFAULT_NU_SCHEDULE = tuple(10.0 ** -k for k in range(1, 8))


@dataclass(frozen=True)
class FidelitySet:
    """Known vertices, their labels in {-1, +1} and the fidelity strength."""

    indices: np.ndarray
    values: np.ndarray
    omega0: float = 1.0

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp).ravel()
        val = np.asarray(self.values, dtype=float).ravel()
        if idx.shape != val.shape:
            raise ParameterError("fidelity indices and values differ in length")
        if np.unique(idx).size != idx.size:
            raise ParameterError("fidelity indices must be distinct")
        if idx.size and idx.min() < 0:
            raise ParameterError("fidelity indices must be nonnegative")
        if not np.all(np.isin(val, (-1.0, 1.0))):
            raise ParameterError("fidelity values must be -1 or +1")
        if not self.omega0 >= 0:
            raise ParameterError(f"omega0 must be nonnegative, got {self.omega0}")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    def check(self, n: int) -> None:
        if self.indices.size and self.indices.max() >= n:
            raise ParameterError(f"fidelity index {self.indices.max()} out of range for n={n}")

    def omega(self, n: int) -> np.ndarray:
        """``omega0`` on fidelity vertices and zero elsewhere."""
        self.check(n)
        w = np.zeros(n)
        w[self.indices] = self.omega0
        return w

    def target(self, n: int) -> np.ndarray:
        f = np.zeros(n)
        f[self.indices] = self.values
        return f


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping and Newton parameters shared by the scalar and multiclass schemes.

    ``c=None`` resolves to ``3/epsilon + omega0`` at run time.
    """

    epsilon: float = 0.5
    tau: float = 0.01
    c: float | None = None
    m: int | None = None
    eps_tol: float = 1e-6
    t_max: int = 500
    potential: str = "smooth"
    nu_schedule: tuple = DEFAULT_NU_SCHEDULE
    l_max: int = 20
    eps_rel: float = 1e-12
    eps_abs: float = 1e-6
    linear_solver: str = "direct"
    norm: str = "euclidean"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not self.tau > 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if self.c is not None and not self.c >= 0:
            raise ParameterError(f"c must be nonnegative, got {self.c}")
        if self.potential not in ("smooth", "nonsmooth"):
            raise ParameterError(f"unknown potential {self.potential!r}")
        nus = tuple(float(v) for v in np.atleast_1d(self.nu_schedule))
        if not nus or any(not v > 0 for v in nus):
            raise ParameterError("nu_schedule must be a nonempty sequence of positive values")
        if any(b >= a for a, b in zip(nus, nus[1:])):
            raise ParameterError(f"nu_schedule must be strictly decreasing, got {nus}")
        object.__setattr__(self, "nu_schedule", nus)
        if self.t_max < 1 or self.l_max < 1:
            raise ParameterError("t_max and l_max must be at least 1")
        if self.linear_solver not in ("direct", "conjugate_gradient"):
            raise ParameterError(f"unknown linear solver {self.linear_solver!r}")
        if self.norm not in ("euclidean", "max"):
            raise ParameterError(f"unknown norm {self.norm!r}")

    def resolve_c(self, omega0: float) -> float:
        return 3.0 / self.epsilon + omega0 if self.c is None else float(self.c)


ScalarConfig = SolverConfig


@dataclass(frozen=True)
class ScalarState:
    """Spectral coefficients ``u_hat`` and the vertex values ``u = Phi u_hat``."""

    u_hat: np.ndarray
    u: np.ndarray
    t: int = 0

    @classmethod
    def from_vertex_values(cls, u0, basis: SpectralBasis, t: int = 0) -> "ScalarState":
        u_hat = basis.phi.T @ np.asarray(u0, dtype=float)
        return cls(u_hat, basis.phi @ u_hat, t)

    @classmethod
    def from_coefficients(cls, u_hat, basis: SpectralBasis, t: int = 0) -> "ScalarState":
        u_hat = np.asarray(u_hat, dtype=float)
        return cls(u_hat, basis.phi @ u_hat, t)


def initial_state(n: int, fid: FidelitySet, basis: SpectralBasis) -> ScalarState:
    """Fidelity vertices at their labels, all others zero, projected onto the basis."""
    return ScalarState.from_vertex_values(fid.target(n), basis)


@dataclass(frozen=True)
class NewtonSolve:
    u: np.ndarray
    coef: np.ndarray
    iterations: int
    residual: float
    initial_residual: float


@dataclass
class Diagnostics:
    """Per-step records of a run, one dict per accepted time step."""

    rows: list = field(default_factory=list)
    converged: bool = False

    @property
    def steps(self) -> int:
        return len(self.rows)

    def column(self, key):
        return np.array([r[key] for r in self.rows])


# --------------------------------------------------------------------------
# Pointwise pieces


def smooth_potential(u):
    u = np.asarray(u, dtype=float)
    return 0.25 * (u * u - 1.0) ** 2


def smooth_potential_derivative(u):
    u = np.asarray(u, dtype=float)
    return u ** 3 - u


def theta_nu(u, nu: float):
    """Derivative of the Moreau-Yosida penalty for the box ``[-1, 1]``."""
    if not nu > 0:
        raise ParameterError(f"nu must be positive, got {nu}")
    u = np.asarray(u, dtype=float)
    return (np.maximum(0.0, u - 1.0) + np.minimum(0.0, u + 1.0)) / nu


def active_sets(u):
    """Boolean masks ``(A, A_plus, A_minus)`` for ``u > 1`` or ``u < -1``."""
    u = np.asarray(u, dtype=float)
    plus = u > 1.0
    minus = u < -1.0
    return plus | minus, plus, minus


def classify_scalar(state) -> np.ndarray:
    """``sign(u)`` with zero mapped to +1."""
    u = state.u if isinstance(state, ScalarState) else np.asarray(state, dtype=float)
    return np.where(u >= 0, 1, -1)


def energy(u, basis: SpectralBasis, fid: FidelitySet, cfg: SolverConfig, nu: float | None = None) -> float:
    """Ginzburg-Landau energy of ``u`` with the fidelity term.

    The Dirichlet part uses the spectral coefficients, i.e. the energy of the
    projection of ``u``. For the non-smooth potential the penalty at ``nu``
    (default: last of the schedule) replaces the hard constraint.
    """
    u = np.asarray(u, dtype=float)
    n = u.size
    u_hat = basis.phi.T @ u
    dirichlet = 0.5 * cfg.epsilon * float(np.sum(basis.lam * u_hat * u_hat))
    if cfg.potential == "smooth":
        pot = float(np.sum(smooth_potential(u)))
    else:
        nu = cfg.nu_schedule[-1] if nu is None else nu
        pot = float(np.sum(0.5 * (1.0 - u * u)))
        pot += float(np.sum(np.maximum(0.0, u - 1.0) ** 2 + np.minimum(0.0, u + 1.0) ** 2)) * cfg.epsilon / (2 * nu)
    w, f = fid.omega(n), fid.target(n)
    fidelity = 0.5 * float(np.sum(w * (f - u) ** 2))
    return dirichlet + pot / cfg.epsilon + fidelity


# --------------------------------------------------------------------------
# Smooth scheme


def step_smooth(state: ScalarState, basis: SpectralBasis, fid: FidelitySet, cfg: SolverConfig) -> ScalarState:
    """One convexity-split step with the double-well potential.

    Per coefficient ``k``::

        (1 + eps*tau*lam_k + c*tau) u_k
            = -(tau/eps) b_k + (1 + c*tau) ubar_k + tau d_k

    with ``b = Phi^T psi'(ubar)`` and ``d = Phi^T omega (f - ubar)``.
    """
    phi, lam = basis.phi, basis.lam
    n = phi.shape[0]
    eps, tau = cfg.epsilon, cfg.tau
    c = cfg.resolve_c(fid.omega0)
    ubar = state.u
    b = phi.T @ smooth_potential_derivative(ubar)
    d = phi.T @ (fid.omega(n) * (fid.target(n) - ubar))
    rhs = -(tau / eps) * b + (1.0 + c * tau) * state.u_hat + tau * d
    u_hat = rhs / (1.0 + eps * tau * lam + c * tau)
    return ScalarState.from_coefficients(u_hat, basis, state.t + 1)


# --------------------------------------------------------------------------
# Non-smooth scheme


def _solve_spd(G, b, method):
    if method == "direct":
        return scipy.linalg.solve(G, b, assume_a="pos", check_finite=False)
    x, info = cg(G, b, rtol=1e-14, atol=0.0, maxiter=10 * G.shape[0])
    if info != 0:
        raise ConvergenceError(f"conjugate gradient stalled (info={info})")
    return x


def _ray_minimizer(slope, curvature, u, du, penalty_grad, iters=60):
    """Step length in ``(0, 1]`` minimizing a convex function along a Newton ray.

    Along ``x + alpha * p`` the derivative is
    ``slope + alpha * curvature + du . penalty_grad(u + alpha du)``, which is
    monotone and piecewise linear in ``alpha``. The full step is returned
    whenever the derivative is still nonpositive at ``alpha = 1``; otherwise
    its root is bracketed by bisection.
    """
    def deriv(alpha):
        return slope + alpha * curvature + float(du @ penalty_grad(u + alpha * du))

    if deriv(1.0) <= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if deriv(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    return hi if lo == 0.0 else lo


def ssn_solve_scalar(
    ubar,
    basis: SpectralBasis,
    fid: FidelitySet,
    cfg: SolverConfig,
    nu: float,
    u_init,
) -> NewtonSolve:
    """Semi-smooth Newton solve of the penalized step equation at penalty ``nu``.

    The residual is the Galerkin projection ``Phi^T F(Phi u_hat)`` of

        F(u) = (c + 1/tau) u + eps L u + theta_nu(u) - (1/eps + c + 1/tau) ubar
               - omega (f - ubar),

    and each iteration solves the ``m x m`` system with matrix
    ``(c + 1/tau) I + eps Lambda + (1/nu) Phi^T chi_A Phi`` for the active set
    of the current iterate. Iteration stops once
    ``||F_l|| <= eps_rel ||F_0|| + eps_abs``.
    """
    if not nu > 0:
        raise ParameterError(f"nu must be positive, got {nu}")
    phi, lam = basis.phi, basis.lam
    n = phi.shape[0]
    eps = cfg.epsilon
    a = cfg.resolve_c(fid.omega0) + 1.0 / cfg.tau
    assert a > 0, "c + 1/tau must be positive for a definite Newton matrix"
    ubar = np.asarray(ubar, dtype=float)
    diag = a + eps * lam
    rhs0 = (1.0 / eps + a) * (phi.T @ ubar) + phi.T @ (fid.omega(n) * (fid.target(n) - ubar))

    return projected_newton(diag, rhs0, phi, phi.T @ np.asarray(u_init, dtype=float), nu, _box_pieces, cfg)


def _box_pieces(u):
    """Active mask and offset with ``nu * theta_nu(u) = chi_A u - offset``."""
    _, plus, minus = active_sets(u)
    return plus | minus, plus.astype(float) - minus.astype(float)


def projected_newton(diag, rhs0, phi, x0, nu, pieces, cfg: SolverConfig) -> NewtonSolve:
    """Semi-smooth Newton for ``diag * x + Phi^T theta(Phi x) = rhs0``.

    ``theta`` is a piecewise-linear penalty described by ``pieces(u)``, which
    returns the active mask ``A`` and an offset ``s`` (or ``None`` for zero)
    such that ``theta(u) = (chi_A u - s) / nu``. Each step is followed by an exact line
    search on the underlying convex energy, so the full Newton step is taken
    whenever it does not overshoot the minimizer along the ray.
    """
    def theta(u):
        act, shift = pieces(u)
        t = np.where(act, u, 0.0)
        return (t if shift is None else t - shift) / nu

    def residual(x, u):
        return diag * x + phi.T @ theta(u) - rhs0

    x = np.array(x0, dtype=float)
    u = phi @ x
    F = residual(x, u)
    r0 = float(np.linalg.norm(F))
    stop = cfg.eps_rel * r0 + cfg.eps_abs
    r = r0
    for it in range(1, cfg.l_max + 1):
        act, shift = pieces(u)
        G = np.diag(diag)
        b = rhs0.copy()
        if act.any():
            PA = phi[act]
            G += PA.T @ PA / nu
            if shift is not None:
                b += phi.T @ shift / nu
        step = _solve_spd(G, b, cfg.linear_solver) - x
        du = phi @ step
        alpha = _ray_minimizer(
            float(step @ (diag * x - rhs0)), float(step @ (diag * step)), u, du, theta
        )
        x = x + alpha * step
        u = phi @ x
        F = residual(x, u)
        r = float(np.linalg.norm(F))
        if r <= stop:
            return NewtonSolve(u, x, it, r, r0)
    raise ConvergenceError(
        f"semi-smooth Newton exceeded l_max={cfg.l_max} at nu={nu:g}: "
        f"residual {r:.3e} > {stop:.3e}",
        residuals=r,
    )


def step_nonsmooth(state: ScalarState, basis: SpectralBasis, fid: FidelitySet, cfg: SolverConfig, nus: Sequence[float] | None = None):
    """One time step with penalty continuation over ``nus``.

    Each Newton solve starts from the solution at the previous penalty; the
    first starts from the previous time level. Returns the new state and the
    Newton iteration counts.
    """
    nus = cfg.nu_schedule if nus is None else nus
    u = state.u
    iters = []
    sol = None
    for nu in nus:
        sol = ssn_solve_scalar(state.u, basis, fid, cfg, nu, u)
        u = sol.u
        iters.append(sol.iterations)
    return ScalarState(sol.coef, sol.u, state.t + 1), iters


# --------------------------------------------------------------------------
# Time loop


def relative_change(u, ubar, norm: str = "euclidean") -> float:
    ord_ = None if norm == "euclidean" else np.inf
    num = float(np.linalg.norm(np.ravel(u) - np.ravel(ubar), ord=ord_))
    den = float(np.linalg.norm(np.ravel(ubar), ord=ord_))
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return num / den


def run_scalar(initial: ScalarState, basis: SpectralBasis, fid: FidelitySet, cfg: SolverConfig):
    """Step until ``||u - ubar|| / ||ubar|| <= eps_tol`` or ``t_max`` steps.

    Returns the final state and :class:`Diagnostics` with one row per step
    (``step, rel_change, energy, min_u, max_u, newton_iters``).
    """
    fid.check(basis.n)
    if cfg.m is not None and cfg.m != basis.m:
        basis = basis.truncate(cfg.m)
    if initial.u_hat.size != basis.m:
        initial = ScalarState.from_vertex_values(initial.u, basis, initial.t)
    diag = Diagnostics()
    state = initial
    for _ in range(cfg.t_max):
        if cfg.potential == "smooth":
            new = step_smooth(state, basis, fid, cfg)
            newton = 0
        else:
            new, its = step_nonsmooth(state, basis, fid, cfg)
            newton = int(sum(its))
        rel = relative_change(new.u, state.u, cfg.norm)
        diag.rows.append({
            "step": new.t,
            "rel_change": rel,
            "energy": energy(new.u, basis, fid, cfg),
            "min_u": float(new.u.min()),
            "max_u": float(new.u.max()),
            "newton_iters": newton,
        })
        state = new
        if rel <= cfg.eps_tol:
            diag.converged = True
            break
    return state, diag


def overshoot(u) -> float:
    """``max(0, ||u||_inf - 1)``."""
    return max(0.0, float(np.max(np.abs(u))) - 1.0)


def with_potential(cfg: SolverConfig, potential: str) -> SolverConfig:
    return replace(cfg, potential=potential)
