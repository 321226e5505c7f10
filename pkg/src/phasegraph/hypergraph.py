"""Hypergraphs from categorical attribute tables and their normalized Laplacian.

A hyperedge groups every record that shares one value of one attribute. The
normalized Laplacian is ``L = I - Theta`` with

    Theta = Dv^-1/2 H W De^-1 H^T Dv^-1/2,

applied in factored form so that the (possibly dense) vertex-vertex product
is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import GraphConstructionError, ParameterError
from .graph import LaplacianKind, LaplacianOperator, Operator, _as_2d


@dataclass(frozen=True)
class CategoricalTable:
    """Rectangular table of categorical cells.

    ``cells`` is an object array of shape ``(n_rows, n_columns)``; missing
    entries are ``None`` and flagged in ``missing``.
    """

    columns: tuple
    cells: np.ndarray
    label_column: str | None = None
    missing: np.ndarray = field(init=False)

    def __post_init__(self):
        cols = tuple(str(c) for c in self.columns)
        cells = np.asarray(self.cells, dtype=object)
        if cells.ndim != 2 or cells.shape[1] != len(cols):
            raise ParameterError(
                f"cells of shape {cells.shape} do not match {len(cols)} columns"
            )
        if len(set(cols)) != len(cols):
            raise ParameterError("duplicate column names")
        if self.label_column is not None and self.label_column not in cols:
            raise ParameterError(f"label column {self.label_column!r} not in table")
        missing = np.vectorize(lambda v: v is None, otypes=[bool])(cells) if cells.size else np.zeros(cells.shape, bool)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "missing", missing)

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def attribute_columns(self) -> tuple:
        return tuple(c for c in self.columns if c != self.label_column)

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.columns.index(name)
        except ValueError:
            raise ParameterError(f"unknown column {name!r}") from None
        return self.cells[:, j]

    @property
    def labels(self) -> np.ndarray:
        if self.label_column is None:
            raise ParameterError("table has no label column")
        return self.column(self.label_column)


@dataclass(frozen=True)
class Hypergraph:
    """Weighted hypergraph given by its ``n x m_e`` 0/1 incidence matrix."""

    H: sp.csc_array
    weights: np.ndarray
    edge_labels: tuple = ()
    vertex_degrees: np.ndarray = field(init=False)
    edge_degrees: np.ndarray = field(init=False)

    def __post_init__(self):
        H = sp.csc_array(self.H, dtype=float)
        H.eliminate_zeros()
        H.sort_indices()
        if H.nnz and not np.all(H.data == 1.0):
            raise GraphConstructionError("incidence matrix must be 0/1")
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape != (H.shape[1],):
            raise GraphConstructionError(
                f"{w.size} weights given for {H.shape[1]} hyperedges"
            )
        if np.any(~(w > 0)):
            raise GraphConstructionError("hyperedge weights must be positive")
        delta = np.diff(H.indptr).astype(float)
        empty = np.flatnonzero(delta == 0)
        if empty.size:
            raise GraphConstructionError(f"hyperedge {int(empty[0])} is empty")
        dv = H @ w
        lonely = np.flatnonzero(dv <= 0)
        if lonely.size:
            raise GraphConstructionError(
                f"vertex {int(lonely[0])} belongs to no hyperedge "
                f"({lonely.size} such vertices)"
            )
        for a in (w, dv, delta):
            a.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "vertex_degrees", dv)
        object.__setattr__(self, "edge_degrees", delta)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def n_edges(self) -> int:
        return self.H.shape[1]

    def adjacency(self) -> sp.csr_array:
        """``H W_H H^T - D_V``; exposed for inspection only."""
        A = (self.H * self.weights) @ self.H.T
        return sp.csr_array(A - sp.diags_array(self.vertex_degrees))


def _binned(values, width):
    out = []
    for v in values:
        if v is None:
            out.append(None)
        else:
            out.append(int(np.floor(float(v) / width)))
    return out


def hyperedges_from_attributes(
    table: CategoricalTable,
    include_columns: Sequence[str] | None = None,
    weight: float = 1.0,
    missing_as_value: bool = False,
    bin_widths: Mapping[str, float] | None = None,
) -> Hypergraph:
    """One hyperedge per (column, value) pair, holding every row with that value.

    Columns are visited in the given order and values in sorted order, so the
    incidence matrix is a deterministic function of the table. Missing cells
    join no hyperedge unless ``missing_as_value`` is set. ``bin_widths`` maps
    numeric columns to a bin width; values are grouped by ``floor(v / width)``.
    """
    if not weight > 0:
        raise ParameterError(f"hyperedge weight must be positive, got {weight}")
    cols = list(table.attribute_columns if include_columns is None else include_columns)
    if not cols:
        raise ParameterError("no attribute columns selected")
    bin_widths = dict(bin_widths or {})
    rows, edge_cols, labels = [], [], []
    for name in cols:
        values = list(table.column(name))
        if name in bin_widths:
            values = _binned(values, bin_widths[name])
        groups: dict = {}
        for i, v in enumerate(values):
            if v is None and not missing_as_value:
                continue
            groups.setdefault(v, []).append(i)
        for v in sorted(groups, key=lambda x: (x is None, str(x))):
            members = groups[v]
            rows.extend(members)
            edge_cols.extend([len(labels)] * len(members))
            labels.append((name, v))
    n = table.n_rows
    H = sp.csc_array(
        (np.ones(len(rows)), (np.asarray(rows, dtype=np.intp), np.asarray(edge_cols, dtype=np.intp))),
        shape=(n, len(labels)),
    )
    return Hypergraph(H, np.full(len(labels), float(weight)), edge_labels=tuple(labels))


def hypergraph_laplacian(h: Hypergraph) -> LaplacianOperator:
    """``I - Theta`` as an operator; ``Theta`` is the companion ``similarity``."""
    inv_sqrt = 1.0 / np.sqrt(h.vertex_degrees)
    edge_scale = h.weights / h.edge_degrees
    H, Ht = h.H.tocsr(), h.H.T.tocsr()

    def apply_theta(x):
        y = (inv_sqrt * _as_2d(x).T).T
        y = Ht @ y
        y = (edge_scale * y.T).T
        y = H @ y
        return (inv_sqrt * y.T).T.reshape(x.shape)

    theta = Operator(h.n, apply_theta)
    return LaplacianOperator(
        h.n,
        lambda x: x - apply_theta(x),
        LaplacianKind.SYMMETRIC_NORMALIZED,
        similarity=theta,
        sqrt_degrees=np.sqrt(h.vertex_degrees),
    )


def hypergraph_quadratic_form(h: Hypergraph, u) -> float:
    """Pairwise sum over hyperedges of ``w(e)/delta(e) * (u_i/sqrt(d_i) - u_j/sqrt(d_j))**2``.

    Each unordered pair inside a hyperedge is counted once; this equals
    ``u^T (I - Theta) u``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (h.n,):
        raise ParameterError(f"vector of length {u.shape} for hypergraph with {h.n} vertices")
    a = u / np.sqrt(h.vertex_degrees)
    H = h.H
    total = 0.0
    for e in range(h.n_edges):
        members = H.indices[H.indptr[e]:H.indptr[e + 1]]
        if members.size < 2:
            continue
        x = a[members]
        diff = x[:, None] - x[None, :]
        pair_sum = np.triu(diff * diff, k=1).sum()
        total += h.weights[e] / h.edge_degrees[e] * pair_sum
    return float(total)
