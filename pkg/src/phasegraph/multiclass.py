"""K-class diffuse-interface segmentation on the Gibbs simplex.

The membership matrix ``U`` (``n x K``, one row per vertex) evolves in the
spectral basis one class column at a time and is projected row-wise back to
the simplex after every step. The smooth scheme uses the multi-well
potential built from L1 distances to the pure phases and is explicit in it;
the non-smooth scheme uses the quadratic interaction ``-u.Tu/2`` with a
Moreau-Yosida penalty on negative entries and a semi-smooth Newton solve per
class column.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigWarning, ConvergenceError, ParameterError
from .scalar import Diagnostics, SolverConfig, projected_newton, relative_change
from .spectral import SpectralBasis


# --------------------------------------------------------------------------
# Simplex projection

SIMPLEX_TOL = 1e-12


def _project_rows(V: np.ndarray) -> np.ndarray:
    K = V.shape[1]
    # Rows already on the simplex to round-off are left alone, which makes
    # the projection exactly idempotent.
    feasible = (V.min(axis=1) >= 0) & (np.abs(V.sum(axis=1) - 1.0) <= SIMPLEX_TOL)
    out = V.copy()
    todo = ~feasible
    if not todo.any():
        return out
    W = V[todo]
    S = -np.sort(-W, axis=1)
    css = np.cumsum(S, axis=1) - 1.0
    j = np.arange(1, K + 1)
    rho = np.count_nonzero(S - css / j > 0, axis=1)
    shift = css[np.arange(W.shape[0]), rho - 1] / rho
    out[todo] = np.maximum(W - shift[:, None], 0.0)
    return out


def simplex_project(v) -> np.ndarray:
    """Euclidean projection of a vector (or of every row of a matrix) onto the simplex.

    Sort-and-threshold: with ``s`` sorted descending, the threshold is
    ``(s_1 + ... + s_r - 1) / r`` for the largest ``r`` keeping ``s_r`` above it.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        if v.size < 1:
            raise ParameterError("cannot project an empty vector")
        return _project_rows(v[None, :])[0]
    if v.ndim != 2 or v.shape[1] < 1:
        raise ParameterError(f"expected a vector or an n x K matrix, got shape {v.shape}")
    return _project_rows(v)


def multiclass_potential_gradient(U_bar) -> np.ndarray:
    """Matrix ``T(U)`` of the L1 multi-well potential.

    ``T_ik = sum_l (1 - 2 delta_kl) d_l/2 * prod_{m != l} d_m**2 / 4`` with
    ``d_l = ||u_i - e_l||_1``, evaluated as written (also on kinks). On
    ``[0, 1]^K`` this is twice the gradient of ``psi(U) = 1/2 sum_i prod_k d_k**2 / 4``.
    """
    U = np.atleast_2d(np.asarray(U_bar, dtype=float))
    absU = np.abs(U)
    d = absU.sum(axis=1, keepdims=True) - absU + np.abs(U - 1.0)
    q = 0.25 * d * d
    # Leave-one-out products without division (q may vanish).
    n, K = q.shape
    prefix = np.ones((n, K))
    suffix = np.ones((n, K))
    prefix[:, 1:] = np.cumprod(q[:, :-1], axis=1)
    suffix[:, :-1] = np.cumprod(q[:, :0:-1], axis=1)[:, ::-1]
    S = d * prefix * suffix
    return 0.5 * S.sum(axis=1, keepdims=True) - S


def multiclass_potential(U) -> float:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    absU = np.abs(U)
    d = absU.sum(axis=1, keepdims=True) - absU + np.abs(U - 1.0)
    return 0.5 * float(np.sum(np.prod(0.25 * d * d, axis=1)))


# --------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class InteractionMatrix:
    """Symmetric ``K x K`` interaction matrix of the non-smooth potential."""

    T: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ParameterError(f"interaction matrix must be square, got {T.shape}")
        if not np.array_equal(T, T.T):
            raise ParameterError("interaction matrix must be symmetric")
        if np.linalg.eigvalsh(T).max() <= 0:
            raise ParameterError("interaction matrix needs at least one positive eigenvalue")
        T.setflags(write=False)
        object.__setattr__(self, "T", T)

    @classmethod
    def uniform(cls, K: int) -> "InteractionMatrix":
        """``I - 1 1^T``: equal interaction between distinct classes, none with itself."""
        if K < 2:
            raise ParameterError(f"at least two classes are required, got K={K}")
        return cls(np.eye(K) - np.ones((K, K)))

    @property
    def K(self) -> int:
        return self.T.shape[0]


@dataclass(frozen=True)
class MulticlassFidelity:
    """Known vertices with labels in ``1..K``."""

    indices: np.ndarray
    labels: np.ndarray
    K: int
    omega0: float = 1.0

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp).ravel()
        lab = np.asarray(self.labels).ravel()
        if idx.shape != lab.shape:
            raise ParameterError("fidelity indices and labels differ in length")
        if np.unique(idx).size != idx.size:
            raise ParameterError("fidelity indices must be distinct")
        if idx.size and idx.min() < 0:
            raise ParameterError("fidelity indices must be nonnegative")
        if self.K < 2:
            raise ParameterError(f"at least two classes are required, got K={self.K}")
        if lab.size and (not np.all(lab == np.round(lab)) or lab.min() < 1 or lab.max() > self.K):
            raise ParameterError(f"fidelity labels must be integers in 1..{self.K}")
        if not self.omega0 >= 0:
            raise ParameterError(f"omega0 must be nonnegative, got {self.omega0}")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "labels", lab.astype(np.intp))

    def check(self, n: int) -> None:
        if self.indices.size and self.indices.max() >= n:
            raise ParameterError(f"fidelity index {self.indices.max()} out of range for n={n}")

    def omega(self, n: int) -> np.ndarray:
        self.check(n)
        w = np.zeros(n)
        w[self.indices] = self.omega0
        return w

    def target(self, n: int) -> np.ndarray:
        """``U_hat``: pure phases on fidelity rows, zero rows elsewhere."""
        self.check(n)
        U = np.zeros((n, self.K))
        U[self.indices, self.labels - 1] = 1.0
        return U


@dataclass(frozen=True)
class SimplexState:
    U: np.ndarray
    t: int = 0

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def K(self) -> int:
        return self.U.shape[1]


def init_multiclass(n: int, K: int, fid: MulticlassFidelity, seed=0) -> SimplexState:
    """Uniform random rows projected to the simplex, fidelity rows set to their phases."""
    if fid.K != K:
        raise ParameterError(f"fidelity declares K={fid.K}, state requested K={K}")
    fid.check(n)
    rng = np.random.default_rng(seed)
    U = simplex_project(rng.uniform(0.0, 1.0, size=(n, K)))
    U[fid.indices] = 0.0
    U[fid.indices, fid.labels - 1] = 1.0
    return SimplexState(U, 0)


def classify_multiclass(state) -> np.ndarray:
    """Row-wise argmax as labels ``1..K``; ties go to the smallest class."""
    U = state.U if isinstance(state, SimplexState) else np.asarray(state, dtype=float)
    return np.argmax(U, axis=1) + 1


# --------------------------------------------------------------------------
# Steps


def _check_c(c, bound, what):
    if c < bound:
        warnings.warn(f"c={c:g} is below {what}={bound:g}; the splitting may not be convex", ConfigWarning, stacklevel=3)
        return False
    return True


def step_multiclass_smooth(state: SimplexState, basis: SpectralBasis, fid: MulticlassFidelity, cfg: SolverConfig) -> SimplexState:
    """One convexity-split step with the L1 multi-well potential, then projection.

    In spectral coordinates ``B V = (1 + c tau) Vbar - tau/(2 eps) Phi^T T(Ubar)
    + tau Phi^T omega (U_hat - Ubar)`` with ``B = (1 + c tau) I + eps tau Lambda``.
    """
    phi, lam = basis.phi, basis.lam
    n = phi.shape[0]
    eps, tau = cfg.epsilon, cfg.tau
    c = cfg.resolve_c(fid.omega0)
    _check_c(c, fid.omega0 + 1.0 / eps, "omega0 + 1/eps")
    Ubar = state.U
    Vbar = phi.T @ Ubar
    forcing = fid.omega(n)[:, None] * (fid.target(n) - Ubar)
    rhs = (1.0 + c * tau) * Vbar - (tau / (2 * eps)) * (phi.T @ multiclass_potential_gradient(Ubar)) + tau * (phi.T @ forcing)
    V = rhs / (1.0 + c * tau + eps * tau * lam)[:, None]
    return SimplexState(simplex_project(phi @ V), state.t + 1)


def _negative_pieces(u):
    return u < 0.0, None


def step_multiclass_nonsmooth(
    state: SimplexState,
    basis: SpectralBasis,
    fid: MulticlassFidelity,
    cfg: SolverConfig,
    nu=None,
    interaction: InteractionMatrix | None = None,
):
    """One step of the penalized obstacle scheme, then projection.

    Every class column ``i`` solves, against the frozen previous state,

        ((c + 1/tau) I + eps L) u_i + theta_nu(u_i)
            = (c + 1/tau) ubar_i + (1/eps) (Ubar T)_i + omega (uhat_i - ubar_i)

    in the spectral basis with ``theta_nu(u) = min(0, u)/nu``. ``nu`` is a
    single value or a decreasing sequence (continuation, default the config
    schedule). Returns the new state and the Newton counts per class.
    """
    phi, lam = basis.phi, basis.lam
    n = phi.shape[0]
    K = state.K
    T = (interaction or InteractionMatrix.uniform(K)).T
    if T.shape[0] != K:
        raise ParameterError(f"interaction matrix is {T.shape[0]}x{T.shape[0]} for K={K}")
    nus = cfg.nu_schedule if nu is None else tuple(np.atleast_1d(nu).astype(float))
    eps = cfg.epsilon
    c = cfg.resolve_c(fid.omega0)
    _check_c(c, fid.omega0, "omega0")
    a = c + 1.0 / cfg.tau
    diag = a + eps * lam
    Ubar = state.U
    forcing = fid.omega(n)[:, None] * (fid.target(n) - Ubar) + (Ubar @ T) / eps
    rhs = a * (phi.T @ Ubar) + phi.T @ forcing
    U = np.empty_like(Ubar)
    counts = []
    for i in range(K):
        x = phi.T @ Ubar[:, i]
        its = 0
        for v in nus:
            try:
                sol = projected_newton(diag, rhs[:, i], phi, x, v, _negative_pieces, cfg)
            except ConvergenceError as exc:
                raise ConvergenceError(f"class {i + 1}: {exc}", residuals=exc.residuals) from exc
            x = sol.coef
            its += sol.iterations
        U[:, i] = phi @ x
        counts.append(its)
    return SimplexState(simplex_project(U), state.t + 1), counts


def multiclass_energy(U, basis: SpectralBasis, fid: MulticlassFidelity, cfg: SolverConfig, interaction: InteractionMatrix | None = None) -> float:
    """Energy of a simplex-valued state (Dirichlet part in the spectral basis)."""
    U = np.asarray(U, dtype=float)
    n = U.shape[0]
    V = basis.phi.T @ U
    dirichlet = 0.5 * cfg.epsilon * float(np.sum(basis.lam[:, None] * V * V))
    if cfg.potential == "smooth":
        pot = multiclass_potential(U)
    else:
        T = (interaction or InteractionMatrix.uniform(U.shape[1])).T
        pot = -0.5 * float(np.sum(U * (U @ T)))
    fidel = 0.5 * float(np.sum(fid.omega(n)[:, None] * (fid.target(n) - U) ** 2))
    return dirichlet + pot / cfg.epsilon + fidel


def run_multiclass(
    initial: SimplexState,
    basis: SpectralBasis,
    fid: MulticlassFidelity,
    cfg: SolverConfig,
    interaction: InteractionMatrix | None = None,
):
    """Step until ``||U - Ubar||_F / ||Ubar||_F <= eps_tol`` or ``t_max`` steps.

    Diagnostics rows carry ``step, rel_change, energy, min_u, max_u,
    newton_iters`` and, for the non-smooth scheme, ``newton_by_class``.
    """
    fid.check(basis.n)
    if cfg.m is not None and cfg.m != basis.m:
        basis = basis.truncate(cfg.m)
    diag = Diagnostics()
    state = initial
    for _ in range(cfg.t_max):
        if cfg.potential == "smooth":
            new = step_multiclass_smooth(state, basis, fid, cfg)
            counts = []
        else:
            new, counts = step_multiclass_nonsmooth(state, basis, fid, cfg, interaction=interaction)
        rel = relative_change(new.U, state.U, cfg.norm)
        diag.rows.append({
            "step": new.t,
            "rel_change": rel,
            "energy": multiclass_energy(new.U, basis, fid, cfg, interaction),
            "min_u": float(new.U.min()),
            "max_u": float(new.U.max()),
            "newton_iters": int(sum(counts)),
            "newton_by_class": ";".join(str(k) for k in counts),
        })
        state = new
        if rel <= cfg.eps_tol:
            diag.converged = True
            break
    return state, diag
