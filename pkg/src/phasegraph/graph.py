"""Weighted graphs built from feature vectors, and their Laplacians.

Two weight functions are provided: the plain Gaussian kernel with a global
scale ``sigma`` and the self-tuning kernel of Zelnik-Manor and Perona, which
scales every pair by the distances of both endpoints to their ``R``-th
nearest neighbour. Either can be restricted to a symmetric k-nearest-neighbour
pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .errors import GraphConstructionError, ParameterError

Metric = Union[str, Callable[[np.ndarray, np.ndarray], float]]

#: Largest operator size that ``to_dense`` materializes without being asked to.
DENSE_ORACLE_BOUND = 2000

# Rows of the distance matrix computed per block; bounds peak memory.
_ROW_BLOCK = 512


@dataclass(frozen=True)
class FeatureSet:
    """``n`` feature vectors of a common dimension, stored row-wise."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ParameterError(f"feature array must be 2-D, got shape {pts.shape}")
        if pts.shape[0] < 2:
            raise ParameterError("at least two feature vectors are required")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("feature vectors contain NaN or Inf")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def as_features(points) -> FeatureSet:
    return points if isinstance(points, FeatureSet) else FeatureSet(points)


class LaplacianKind(str, Enum):
    COMBINATORIAL = "combinatorial"
    SYMMETRIC_NORMALIZED = "symmetric_normalized"
    RANDOM_WALK = "random_walk"


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph with a sparse symmetric nonnegative weight matrix.

    Construction checks exact symmetry, a zero diagonal and strictly positive
    degrees; an isolated vertex raises :class:`GraphConstructionError`.
    """

    W: sp.csr_array
    degrees: np.ndarray = field(init=False)

    def __post_init__(self):
        W = sp.csr_array(self.W, dtype=float)
        W.eliminate_zeros()
        W.sort_indices()
        n, n2 = W.shape
        if n != n2:
            raise GraphConstructionError(f"weight matrix must be square, got {W.shape}")
        if W.nnz and W.data.min() < 0:
            raise GraphConstructionError("negative edge weights are not supported")
        if np.any(W.diagonal() != 0):
            i = int(np.flatnonzero(W.diagonal())[0])
            raise GraphConstructionError(f"vertex {i} has a self-loop")
        if (W != W.T).nnz:
            raise GraphConstructionError("weight matrix is not symmetric")
        d = np.asarray(W.sum(axis=1)).ravel()
        isolated = np.flatnonzero(d <= 0)
        if isolated.size:
            raise GraphConstructionError(
                f"vertex {int(isolated[0])} has zero degree "
                f"({isolated.size} isolated vertices in total)"
            )
        d.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "degrees", d)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def D(self) -> sp.dia_array:
        return sp.dia_array((self.degrees[None, :], [0]), shape=(self.n, self.n))


# --------------------------------------------------------------------------
# Operators


class Operator:
    """Square linear operator given by a block apply function.

    ``apply`` maps an ``(n,)`` or ``(n, k)`` array to an array of the same
    shape. Symmetric operators are symmetrized on dense materialization so
    that round-off in the apply path cannot break exact symmetry.
    """

    def __init__(self, n: int, apply: Callable[[np.ndarray], np.ndarray], symmetric: bool = True):
        self.n = n
        self.shape = (n, n)
        self.symmetric = symmetric
        self._apply = apply

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n:
            raise ParameterError(f"operator of size {self.n} applied to vector of length {x.shape[0]}")
        return self._apply(x)

    def __matmul__(self, x):
        return self.matvec(x)

    def to_dense(self, max_n: int = DENSE_ORACLE_BOUND) -> np.ndarray:
        if self.n > max_n:
            raise ParameterError(
                f"refusing to materialize a {self.n}x{self.n} operator (bound {max_n})"
            )
        A = self._apply(np.eye(self.n))
        if self.symmetric:
            A = 0.5 * (A + A.T)
        return A


class LaplacianOperator(Operator):
    """A graph or hypergraph Laplacian.

    For the symmetric normalized kind, ``similarity`` is the companion
    operator ``S`` with ``L = I - S``; its largest eigenvalues are the ones
    the eigensolver targets. ``sqrt_degrees`` spans the null space of the
    symmetric normalized Laplacian.
    """

    def __init__(self, n, apply, kind, similarity=None, sqrt_degrees=None):
        kind = LaplacianKind(kind)
        super().__init__(n, apply, symmetric=kind != LaplacianKind.RANDOM_WALK)
        self.kind = kind
        self.similarity = similarity
        self.sqrt_degrees = sqrt_degrees


def _as_2d(x):
    return x if x.ndim == 2 else x[:, None]


def laplacian(g: WeightedGraph, kind: LaplacianKind | str = LaplacianKind.SYMMETRIC_NORMALIZED) -> LaplacianOperator:
    """Return ``D - W``, ``I - D^-1/2 W D^-1/2`` or ``I - D^-1 W`` as an operator."""
    kind = LaplacianKind(kind)
    W, d = g.W, g.degrees
    if kind == LaplacianKind.COMBINATORIAL:
        def apply(x):
            return (d * _as_2d(x).T).T.reshape(x.shape) - W @ x
        return LaplacianOperator(g.n, apply, kind)

    if kind == LaplacianKind.RANDOM_WALK:
        inv_d = 1.0 / d

        def apply(x):
            return x - (inv_d * _as_2d(W @ x).T).T.reshape(x.shape)
        return LaplacianOperator(g.n, apply, kind)

    inv_sqrt = 1.0 / np.sqrt(d)

    def apply_similarity(x):
        y = (inv_sqrt * _as_2d(x).T).T
        y = W @ y
        return (inv_sqrt * y.T).T.reshape(x.shape)

    similarity = Operator(g.n, apply_similarity)
    return LaplacianOperator(
        g.n,
        lambda x: x - apply_similarity(x),
        kind,
        similarity=similarity,
        sqrt_degrees=np.sqrt(d),
    )


# --------------------------------------------------------------------------
# Weight construction


def _distance_rows(pts: np.ndarray, rows: slice, metric: Metric) -> np.ndarray:
    return cdist(pts[rows], pts, metric=metric)


def _iter_blocks(n):
    for start in range(0, n, _ROW_BLOCK):
        yield slice(start, min(start + _ROW_BLOCK, n))


def _neighbor_order(pts: np.ndarray, metric: Metric, k: int):
    """The ``k`` nearest neighbours of every point (self excluded) and their distances.

    Ties are broken by vertex index (stable sort on distance).
    """
    n = pts.shape[0]
    idx = np.empty((n, k), dtype=np.intp)
    dist = np.empty((n, k))
    for rows in _iter_blocks(n):
        D = _distance_rows(pts, rows, metric)
        local = np.arange(D.shape[0])
        D[local, np.arange(rows.start, rows.stop)] = np.inf
        order = np.argsort(D, axis=1, kind="stable")[:, :k]
        idx[rows] = order
        dist[rows] = D[local[:, None], order]
    return idx, dist


def _kth_neighbor_distance(pts: np.ndarray, metric: Metric, R: int) -> np.ndarray:
    n = pts.shape[0]
    tau = np.empty(n)
    for rows in _iter_blocks(n):
        D = _distance_rows(pts, rows, metric)
        D[np.arange(D.shape[0]), np.arange(rows.start, rows.stop)] = np.inf
        tau[rows] = np.partition(D, R - 1, axis=1)[:, R - 1]
    return tau


def _build(pts, metric, kernel, sparsify):
    """Assemble W from ``kernel(d2, rows, cols)`` over all pairs or the kNN pattern."""
    n = pts.shape[0]
    if sparsify is not None:
        k = int(sparsify)
        if not 1 <= k < n:
            raise ParameterError(f"sparsify must satisfy 1 <= k < n={n}, got {k}")
        nbrs, d = _neighbor_order(pts, metric, k)
        rows = np.repeat(np.arange(n), k)
        cols = nbrs.ravel()
        d = d.ravel()
        vals = kernel(d * d, rows, cols)
        W = sp.coo_array((vals, (rows, cols)), shape=(n, n)).tocsr()
        W = W.maximum(W.T)
    else:
        blocks = []
        for r in _iter_blocks(n):
            D = _distance_rows(pts, r, metric)
            ri = np.arange(r.start, r.stop)
            vals = kernel(D * D, ri[:, None], np.arange(n)[None, :])
            vals[np.arange(vals.shape[0]), ri] = 0.0
            blocks.append(sp.csr_array(vals))
        W = sp.vstack(blocks, format="csr")
        W = W.maximum(W.T)
    return WeightedGraph(W)


def gaussian_weights(points, sigma: float, metric: Metric = "euclidean", sparsify: int | None = None) -> WeightedGraph:
    """Gaussian kernel graph, ``w_ij = exp(-dist(x_i, x_j)**2 / sigma)``."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    pts = as_features(points).points

    def kernel(d2, rows, cols):
        return np.exp(-d2 / sigma)

    return _build(pts, metric, kernel, sparsify)


def local_scales(points, R: int, metric: Metric = "euclidean") -> np.ndarray:
    """Distance from each point to its ``R``-th nearest neighbour (self excluded)."""
    pts = as_features(points).points
    n = pts.shape[0]
    if not 1 <= R < n:
        raise ParameterError(f"R must satisfy 1 <= R < n={n}, got {R}")
    tau = _kth_neighbor_distance(pts, metric, R)
    bad = np.flatnonzero(tau <= 0)
    if bad.size:
        raise GraphConstructionError(
            f"point {int(bad[0])} has a zero local scale: at least {R} duplicates "
            f"of it exist ({bad.size} such points)"
        )
    return tau


def zmp_weights(points, R: int, metric: Metric = "euclidean", sparsify: int | None = None) -> WeightedGraph:
    """Self-tuning kernel, ``w_ij = exp(-dist**2 / sqrt(tau_i * tau_j))``."""
    pts = as_features(points).points
    tau = local_scales(pts, R, metric)

    def kernel(d2, rows, cols):
        return np.exp(-d2 / np.sqrt(tau[rows] * tau[cols]))

    return _build(pts, metric, kernel, sparsify)
