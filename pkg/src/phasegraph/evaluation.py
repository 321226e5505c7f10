"""Segmentation quality metrics and fidelity sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class SegmentationResult:
    labels: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels).ravel()
        tru = np.asarray(self.truth).ravel()
        if lab.shape != tru.shape:
            raise ParameterError(f"{lab.size} predicted labels but {tru.size} true labels")
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "truth", tru)

    @property
    def n(self) -> int:
        return self.labels.size


def segment_intensities(original, labels) -> np.ndarray:
    """Replace every pixel by the mean original intensity of its predicted segment."""
    orig = np.asarray(original, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if orig.shape != labels.shape:
        raise ParameterError(f"{orig.size} intensities but {labels.size} labels")
    _, inv = np.unique(labels, return_inverse=True)
    inv = inv.ravel()
    means = np.bincount(inv, weights=orig) / np.bincount(inv)
    # Constant segments keep their value exactly; a summed mean may round.
    lo = np.full(means.size, np.inf)
    hi = np.full(means.size, -np.inf)
    np.minimum.at(lo, inv, orig)
    np.maximum.at(hi, inv, orig)
    means = np.where(lo == hi, lo, means)
    return means[inv]


def foc(original, segmented, p: float = 0.5, q: float = 0.5) -> float:
    """Figure of certainty ``mean(1 / (1 + p |orig - seg|**q))``, in ``(0, 1]``."""
    orig = np.asarray(original, dtype=float).ravel()
    seg = np.asarray(segmented, dtype=float).ravel()
    if orig.shape != seg.shape:
        raise ParameterError(f"intensity vectors differ in length ({orig.size} vs {seg.size})")
    if orig.size == 0:
        raise ParameterError("FOC of an empty image is undefined")
    if not (p > 0 and q > 0):
        raise ParameterError(f"p and q must be positive, got p={p}, q={q}")
    return float(np.mean(1.0 / (1.0 + p * np.abs(orig - seg) ** q)))


def misclassification(result: SegmentationResult, exclude_fidelity=None) -> int:
    """Number of mismatched labels, optionally not counting the given fidelity indices."""
    wrong = result.labels != result.truth
    if exclude_fidelity is not None and len(exclude_fidelity):
        wrong = wrong.copy()
        wrong[np.asarray(exclude_fidelity, dtype=np.intp)] = False
    return int(np.count_nonzero(wrong))


def sample_fidelity(truth, n_per_class, seed=0) -> np.ndarray:
    """Draw ``n_per_class`` vertices of every class uniformly without replacement.

    ``n_per_class`` is an int or a mapping ``class -> count``. Classes are
    visited in sorted order, so the result is a pure function of the seed.
    """
    truth = np.asarray(truth).ravel()
    rng = np.random.default_rng(seed)
    chosen = []
    for cls in np.unique(truth):
        k = n_per_class[cls.item()] if isinstance(n_per_class, dict) else int(n_per_class)
        members = np.flatnonzero(truth == cls)
        if k < 0:
            raise ParameterError(f"negative sample count for class {cls}")
        if k > members.size:
            raise ParameterError(f"class {cls} has {members.size} members, cannot sample {k}")
        chosen.append(np.sort(rng.choice(members, size=k, replace=False)))
    return np.concatenate(chosen) if chosen else np.empty(0, dtype=np.intp)
