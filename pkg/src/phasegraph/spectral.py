"""Smallest eigenpairs of normalized Laplacians.

The iterative path runs Lanczos with full reorthogonalization on the
companion operator ``S = I - L`` and keeps the largest Ritz values; the
eigenvalues of ``L`` are then ``1 - mu``. When the Krylov space fills up
without meeting the residual tolerance the iteration restarts from the
current best Ritz vectors (thick restart). A dense symmetric eigensolver is
kept alongside as an oracle for small problems.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, ParameterError
from .graph import DENSE_ORACLE_BOUND, LaplacianOperator, Operator


@dataclass(frozen=True)
class SpectralBasis:
    """Ascending eigenvalues ``lam`` and orthonormal eigenvectors ``phi`` (columns)."""

    lam: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).ravel()
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 2 or phi.shape[1] != lam.size:
            raise ParameterError(f"{lam.size} eigenvalues but eigenvector block {phi.shape}")
        lam.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "phi", phi)

    @property
    def m(self) -> int:
        return self.lam.size

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    def truncate(self, m: int) -> "SpectralBasis":
        if not 1 <= m <= self.m:
            raise ParameterError(f"cannot truncate a basis of size {self.m} to {m}")
        return SpectralBasis(self.lam[:m], self.phi[:, :m])


def canonicalize_signs(phi: np.ndarray) -> np.ndarray:
    """Flip columns so that the entry of largest magnitude is positive.

    Among entries tied in magnitude (to round-off) the lowest index wins.
    """
    phi = np.array(phi, dtype=float)
    mag = np.abs(phi)
    top = mag.max(axis=0)
    pivot = np.argmax(mag >= top * (1 - 1e-12), axis=0)
    signs = np.sign(phi[pivot, np.arange(phi.shape[1])])
    signs[signs == 0] = 1.0
    return phi * signs


def dense_eigen_oracle(op: Operator, bound: int = DENSE_ORACLE_BOUND):
    """All eigenpairs of a symmetric operator via LAPACK, ascending."""
    if op.n > bound:
        raise ParameterError(f"dense oracle refuses n={op.n} above bound {bound}")
    if not op.symmetric:
        raise ParameterError("dense oracle requires a symmetric operator")
    lam, vec = scipy.linalg.eigh(op.to_dense(max_n=bound))
    return lam, vec


def _lanczos_largest(apply, n, m, tol, max_iter, krylov_dim, rng):
    """Largest ``m`` eigenpairs of a symmetric operator.

    Returns ``(mu, X, residuals, matvecs)`` with ``mu`` descending.
    """
    kdim = min(n, max(krylov_dim, m + 2))
    keep = min(kdim - 1, max(m + 1, (kdim + m) // 2))
    Q = np.empty((n, kdim))
    AQ = np.empty((n, kdim))

    def fresh_direction(k):
        for _ in range(3):
            q = rng.standard_normal(n)
            for _ in range(2):
                q -= Q[:, :k] @ (Q[:, :k].T @ q)
            nq = np.linalg.norm(q)
            if nq > 1e-8:
                return q / nq
        return None

    q = fresh_direction(0)
    k = 0
    matvecs = 0
    best = None
    while True:
        while k < kdim and q is not None:
            Q[:, k] = q
            w = apply(q)
            AQ[:, k] = w
            matvecs += 1
            k += 1
            if k == n:
                q = None
                break
            scale = np.linalg.norm(w)
            for _ in range(2):
                w = w - Q[:, :k] @ (Q[:, :k].T @ w)
            beta = np.linalg.norm(w)
            q = w / beta if beta > 1e-12 * max(scale, 1.0) else fresh_direction(k)

        T = Q[:, :k].T @ AQ[:, :k]
        T = 0.5 * (T + T.T)
        theta, Y = np.linalg.eigh(T)
        order = np.argsort(theta)[::-1]
        theta, Y = theta[order], Y[:, order]
        X = Q[:, :k] @ Y[:, :m]
        R = AQ[:, :k] @ Y[:, :m] - X * theta[:m]
        res = np.linalg.norm(R, axis=0)
        if best is None or res.max() < best[2].max():
            best = (theta[:m].copy(), X.copy(), res.copy())
        if res.max() <= tol or k >= n or q is None:
            # Residuals from the recurrence can drift; confirm with fresh products.
            AX = apply(X)
            matvecs += m
            true_res = np.linalg.norm(AX - X * theta[:m], axis=0)
            if true_res.max() <= tol or k >= n or q is None:
                return theta[:m], X, true_res, matvecs
        if matvecs >= max_iter:
            raise ConvergenceError(
                f"Lanczos did not reach residual {tol:g} within {max_iter} products; "
                f"best residuals {best[2]}",
                residuals=best[2],
            )
        # Thick restart: the leading Ritz vectors plus the pending direction.
        p = min(keep, k - 1)
        Yp = Y[:, :p]
        Q[:, :p] = Q[:, :k] @ Yp
        AQ[:, :p] = AQ[:, :k] @ Yp
        k = p
        if q is not None:
            for _ in range(2):
                q = q - Q[:, :k] @ (Q[:, :k].T @ q)
            q = q / np.linalg.norm(q)


def smallest_eigenpairs(
    op: LaplacianOperator,
    m: int,
    tol: float = 1e-10,
    max_iter: int | None = None,
    seed: int = 0,
    method: str = "lanczos",
    krylov_dim: int | None = None,
    dense_bound: int = DENSE_ORACLE_BOUND,
) -> SpectralBasis:
    """The ``m`` smallest eigenpairs of a symmetric normalized Laplacian.

    ``method`` is ``"lanczos"``, ``"dense"`` or ``"auto"`` (dense when
    ``n <= dense_bound``). Residuals satisfy ``||L phi - lam phi|| <= tol``.
    Eigenvector signs are canonicalized (largest-magnitude entry positive).
    """
    n = op.n
    if not 1 <= m < n:
        raise ParameterError(f"basis size m must satisfy 1 <= m < n={n}, got {m}")
    if method not in ("lanczos", "dense", "auto"):
        raise ParameterError(f"unknown eigensolver method {method!r}")
    if method == "auto":
        method = "dense" if n <= dense_bound else "lanczos"

    if method == "dense":
        lam, vec = dense_eigen_oracle(op, bound=dense_bound)
        lam, phi = lam[:m], vec[:, :m]
    else:
        if op.similarity is not None:
            apply, shift = op.similarity.matvec, 1.0
        else:
            # No companion: Lanczos on (s I - L) with s bounding the spectrum.
            shift = 2.0 * float(np.max(np.abs(op.to_dense(max_n=dense_bound)).sum(axis=1)))

            def apply(x):
                return shift * x - op.matvec(x)
        rng = np.random.default_rng(seed)
        if max_iter is None:
            max_iter = max(2000, 50 * m)
        if krylov_dim is None:
            krylov_dim = max(4 * m, m + 60)
        mu, phi, _, _ = _lanczos_largest(apply, n, m, tol, max_iter, krylov_dim, rng)
        lam = shift - mu
        order = np.argsort(lam, kind="stable")
        lam, phi = lam[order], phi[:, order]
        # Re-orthonormalize against round-off accumulated in the restarts.
        phi, _ = np.linalg.qr(phi)
    return SpectralBasis(np.array(lam), canonicalize_signs(phi))


def save_basis(basis: SpectralBasis, eigenvalues_path, eigenvectors_path) -> None:
    """Write eigenvalues (one per line) and the eigenvector matrix as CSV."""
    np.savetxt(eigenvalues_path, basis.lam[:, None], delimiter=",", fmt="%.17g")
    np.savetxt(eigenvectors_path, basis.phi, delimiter=",", fmt="%.17g")


def load_basis(eigenvalues_path, eigenvectors_path) -> SpectralBasis:
    lam = np.loadtxt(Path(eigenvalues_path), delimiter=",", ndmin=1)
    phi = np.loadtxt(Path(eigenvectors_path), delimiter=",", ndmin=2)
    return SpectralBasis(lam, phi)
