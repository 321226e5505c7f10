"""Loading images, point sets and categorical tables; synthetic benchmarks.

All generators are pure functions of their seed.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ParameterError
from .graph import FeatureSet
from .hypergraph import CategoricalTable


# --------------------------------------------------------------------------
# Atomic output


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write_text(path, buf.getvalue())


# --------------------------------------------------------------------------
# Images


@dataclass(frozen=True)
class ImageData:
    """Per-pixel features in row-major order plus the grid shape ``(rows, cols)``."""

    features: FeatureSet
    shape: tuple

    @property
    def intensity(self) -> np.ndarray:
        """Mean over channels, as a ``rows x cols`` array."""
        return self.features.points.mean(axis=1).reshape(self.shape)


_NETPBM_MAGIC = (b"P2", b"P3", b"P5", b"P6")


def _load_csv_matrix(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParameterError(f"{path}: empty image file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        bad = next(i for i, r in enumerate(rows) if len(r) != len(rows[0]))
        raise ParameterError(f"{path}: row {bad + 1} has {len(rows[bad])} entries, expected {len(rows[0])}")
    try:
        A = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise ParameterError(f"{path}: non-numeric entry ({exc})") from None
    if not np.all(np.isfinite(A)) or A.min() < 0 or A.max() > 1:
        raise ParameterError(f"{path}: CSV intensities must lie in [0, 1]")
    return A


def load_image(path) -> ImageData:
    """Read a PGM/PPM (plain or raw) or a CSV intensity matrix.

    Netpbm samples are scaled to ``[0, 1]`` by their maximum value; CSV
    entries must already lie in ``[0, 1]``. Grey images give one feature per
    pixel, colour images three.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic not in _NETPBM_MAGIC:
        A = _load_csv_matrix(path)
        return ImageData(FeatureSet(A.reshape(-1, 1)), A.shape)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise ParameterError(f"{path}: malformed netpbm file ({exc})") from None
    # Pillow rescales samples to the full range of the decoded mode.
    full = 255.0 if mode in ("L", "RGB") else 65535.0
    arr = arr.astype(float) / full
    shape = arr.shape[:2]
    feats = arr.reshape(shape[0] * shape[1], -1)
    return ImageData(FeatureSet(feats), shape)


def write_pgm(path, labels, shape, K: int | None = None) -> None:
    """Render class labels ``1..K`` as grey levels evenly spaced in ``[0, 255]``."""
    labels = np.asarray(labels).ravel()
    rows, cols = shape
    if labels.size != rows * cols:
        raise ParameterError(f"{labels.size} labels do not fill a {rows}x{cols} grid")
    K = int(labels.max()) if K is None else K
    levels = np.rint(255.0 * (labels - 1) / max(K - 1, 1)).astype(np.uint8)
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + levels.reshape(rows, cols).tobytes())


# --------------------------------------------------------------------------
# Point sets


def load_points_csv(path, label_column: str | None = None):
    """Numeric CSV with a header row; returns ``(FeatureSet, labels or None)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParameterError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if label_column is not None and label_column not in header:
        raise ParameterError(f"{path}: no column {label_column!r}")
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise ParameterError(f"{path}: row {i + 2} has {len(r)} fields, header has {len(header)}")
    j = header.index(label_column) if label_column is not None else None
    feat_cols = [k for k in range(len(header)) if k != j]
    try:
        X = np.array([[float(r[k]) for k in feat_cols] for r in rows])
    except ValueError as exc:
        raise ParameterError(f"{path}: non-numeric feature ({exc})") from None
    labels = None if j is None else np.array([int(r[j]) for r in rows])
    return FeatureSet(X), labels


# --------------------------------------------------------------------------
# Categorical tables


@dataclass(frozen=True)
class TableSchema:
    """How to read a categorical CSV.

    ``columns`` lists the attribute columns to keep (default: all but the
    label); cells equal to one of ``missing`` become ``None``.
    """

    label_column: str | None = None
    columns: tuple | None = None
    missing: tuple = ("?", "")


def load_table(path, schema: TableSchema | None = None) -> CategoricalTable:
    schema = schema or TableSchema()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParameterError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    wanted = list(schema.columns) if schema.columns is not None else [h for h in header if h != schema.label_column]
    if schema.label_column is not None:
        wanted.append(schema.label_column)
    absent = [c for c in wanted if c not in header]
    if absent:
        raise ParameterError(f"{path}: missing columns {absent}")
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise ParameterError(f"{path}: row {i + 2} has {len(r)} fields, header has {len(header)}")
    pos = [header.index(c) for c in wanted]
    missing = set(schema.missing)
    cells = np.empty((len(rows), len(pos)), dtype=object)
    for i, r in enumerate(rows):
        for k, j in enumerate(pos):
            v = r[j].strip()
            cells[i, k] = None if v in missing else v
    return CategoricalTable(tuple(wanted), cells, label_column=schema.label_column)


def write_table_csv(path, table: CategoricalTable, missing: str = "?") -> None:
    rows = [[missing if v is None else v for v in row] for row in table.cells]
    write_csv(path, table.columns, rows)


# --------------------------------------------------------------------------
# Synthetic benchmarks


def make_two_moons(n_total: int = 3000, noise: float = 0.1, seed=0):
    """Two interleaved unit half-circles with isotropic Gaussian noise.

    Class 1 lies on ``(cos t, sin t)``, class 2 on ``(1 - cos t, 1/2 - sin t)``,
    ``t`` evenly spaced in ``[0, pi]``. Returns ``(FeatureSet, labels)``.
    """
    if n_total < 4 or n_total % 2:
        raise ParameterError(f"n_total must be an even number >= 4, got {n_total}")
    if noise < 0:
        raise ParameterError(f"noise must be nonnegative, got {noise}")
    half = n_total // 2
    t = np.linspace(0.0, np.pi, half)
    X = np.r_[np.c_[np.cos(t), np.sin(t)], np.c_[1.0 - np.cos(t), 0.5 - np.sin(t)]]
    X = X + np.random.default_rng(seed).normal(scale=noise, size=X.shape)
    return FeatureSet(X), np.repeat([1, 2], half)


_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]])


def make_four_corners(n_total: int = 2000, K: int = 4, spread: float = 0.5, seed=0):
    """``K`` (2 to 4) Gaussian blobs of standard deviation ``spread`` at corners of ``[-1, 1]^2``."""
    if not 2 <= K <= 4:
        raise ParameterError(f"K must be between 2 and 4, got {K}")
    if n_total < K or n_total % K:
        raise ParameterError(f"n_total={n_total} is not a positive multiple of K={K}")
    if spread < 0:
        raise ParameterError(f"spread must be nonnegative, got {spread}")
    per = n_total // K
    X = np.repeat(_CORNERS[:K], per, axis=0)
    X = X + np.random.default_rng(seed).normal(scale=spread, size=X.shape)
    return FeatureSet(X), np.repeat(np.arange(1, K + 1), per)


def make_two_region_image(size: int = 65, radius: float = 20.0, inside: float = 0.8,
                          outside: float = 0.2, noise: float = 0.04, seed=0):
    """A bright disc on a dark background with additive Gaussian noise.

    Returns ``(observed, clean, labels)`` as ``size x size`` arrays; labels are
    1 for the background and 2 for the disc. Noise is not clipped, so the
    observed image may leave ``[0, 1]`` slightly.
    """
    if size < 2 or radius <= 0:
        raise ParameterError("size must be at least 2 and radius positive")
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    disc = (yy - c) ** 2 + (xx - c) ** 2 < radius ** 2
    clean = np.where(disc, inside, outside)
    observed = clean + np.random.default_rng(seed).normal(scale=noise, size=clean.shape)
    return observed, clean, np.where(disc, 2, 1)


MUSHROOM_ATTRIBUTES = (
    ("cap-shape", 6), ("cap-surface", 4), ("cap-color", 10), ("bruises", 2),
    ("odor", 9), ("gill-attachment", 2), ("gill-spacing", 2), ("gill-size", 2),
    ("gill-color", 12), ("stalk-shape", 2), ("stalk-root", 5),
    ("stalk-surface-above-ring", 4), ("stalk-surface-below-ring", 4),
    ("stalk-color-above-ring", 9), ("stalk-color-below-ring", 9),
    ("veil-color", 4), ("ring-number", 3), ("ring-type", 5),
    ("spore-print-color", 9), ("population", 6), ("habitat", 7),
)


def make_mushroom_table(n_rows: int = 4062, seed=0, subtypes: int = 4, fidelity: float = 0.75,
                        missing_rate: float = 0.3) -> CategoricalTable:
    """Synthetic stand-in for the mushroom table: 21 categorical attributes and a class column.

    Each class (``e``/``p``) is a mixture of ``subtypes`` groups. A group has
    one prototype value per attribute; a record keeps it with probability
    ``fidelity`` and otherwise takes a uniformly random value. A fraction
    ``missing_rate`` of ``stalk-root`` cells is missing.
    """
    rng = np.random.default_rng(seed)
    n_e = int(round(n_rows * 0.518))
    cls = np.r_[np.zeros(n_e, int), np.ones(n_rows - n_e, int)]
    group = np.empty(n_rows, int)
    for k in (0, 1):
        idx = np.flatnonzero(cls == k)
        weights = rng.dirichlet(np.full(subtypes, 2.0))
        group[idx] = k * subtypes + rng.choice(subtypes, size=idx.size, p=weights)
    cells = np.empty((n_rows, len(MUSHROOM_ATTRIBUTES) + 1), dtype=object)
    for j, (name, card) in enumerate(MUSHROOM_ATTRIBUTES):
        alphabet = np.array([chr(ord("a") + v) for v in range(card)], dtype=object)
        proto = rng.integers(card, size=2 * subtypes)
        keep = rng.random(n_rows) < fidelity
        vals = np.where(keep, proto[group], rng.integers(card, size=n_rows))
        cells[:, j] = alphabet[vals]
        if name == "stalk-root":
            cells[rng.random(n_rows) < missing_rate, j] = None
    cells[:, -1] = np.where(cls == 0, "e", "p").astype(object)
    columns = tuple(n for n, _ in MUSHROOM_ATTRIBUTES) + ("class",)
    return CategoricalTable(columns, cells, label_column="class")


def write_labels_csv(path, labels, memberships=None) -> None:
    """``vertex,label`` rows, plus ``p1..pK`` columns when memberships are given."""
    labels = np.asarray(labels).ravel()
    header = ["vertex", "label"]
    if memberships is None:
        rows = [[i, int(l)] for i, l in enumerate(labels)]
    else:
        M = np.asarray(memberships, dtype=float)
        header += [f"p{k + 1}" for k in range(M.shape[1])]
        rows = [[i, int(l), *(repr(float(x)) for x in M[i])] for i, l in enumerate(labels)]
    write_csv(path, header, rows)
