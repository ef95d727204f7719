"""Dense grid representations for labels, probabilities and gradients.

Every map stores one flat row-major plane per class: an array of shape
``(classes.total, shape.pixel_count)`` where pixel index ``i`` enumerates the
flattened grid.  Class index 0 is always the background.  All storage is
float64, and arrays are copied and frozen at construction, so instances are
immutable and safe to share between threads.

Constructors also accept values laid out spatially as
``(classes.total, *shape.dims)``; they are flattened on the way in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, ValidationError

__all__ = [
    "ClassSet",
    "GridShape",
    "LabelMap",
    "ProbabilityMap",
    "GradientMap",
    "ClassOverlapStats",
    "overlap_stats",
    "one_hot_from_indices",
    "PROB_SLACK",
]

# Probability values may stray this far outside [0, 1] so that the
# finite-difference oracle can probe losses at s +/- h without clamping.
PROB_SLACK = 1e-3


@dataclass(frozen=True)
class ClassSet:
    """Object classes of a segmentation task, background implicit at index 0."""

    count_objects: int

    def __post_init__(self) -> None:
        if int(self.count_objects) < 1:
            raise ValidationError(f"need at least one object class, got {self.count_objects}")
        object.__setattr__(self, "count_objects", int(self.count_objects))

    @property
    def total(self) -> int:
        """Number of class planes including the background."""
        return self.count_objects + 1


@dataclass(frozen=True)
class GridShape:
    """Shape of the pixel grid; supports any dimensionality."""

    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValidationError(f"grid dims must be positive, got {self.dims!r}")
        object.__setattr__(self, "dims", dims)

    @property
    def pixel_count(self) -> int:
        return math.prod(self.dims)

    @property
    def ndim(self) -> int:
        return len(self.dims)


@dataclass(frozen=True, eq=False)
class _PlaneMap:
    """Shared storage and validation for per-class plane maps."""

    shape: GridShape
    classes: ClassSet
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64)
        flat = (self.classes.total, self.shape.pixel_count)
        if arr.shape != flat:
            if arr.shape == (self.classes.total, *self.shape.dims):
                arr = arr.reshape(flat)
            else:
                raise ShapeMismatchError(
                    f"values shape {arr.shape} does not match "
                    f"{self.classes.total} classes on grid {self.shape.dims}"
                )
        self._check(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def _check(self, arr: np.ndarray) -> None:
        raise NotImplementedError

    def planes(self) -> np.ndarray:
        """Values reshaped to (classes.total, *dims)."""
        return self.values.reshape(self.classes.total, *self.shape.dims)

    def plane(self, k: int) -> np.ndarray:
        """A single class plane reshaped to the grid dims."""
        return self.values[k].reshape(self.shape.dims)


class LabelMap(_PlaneMap):
    """One-hot ground truth: exactly one active class per pixel."""

    def _check(self, arr: np.ndarray) -> None:
        if not ((arr == 0.0) | (arr == 1.0)).all():
            raise ValidationError("label values must be exactly 0 or 1")
        if not (arr.sum(axis=0) == 1.0).all():
            raise ValidationError("labels must be one-hot per pixel")

    def class_indices(self) -> np.ndarray:
        """Per-pixel class index map (inverse of one_hot_from_indices)."""
        return np.argmax(self.values, axis=0).reshape(self.shape.dims)

    def foreground_sizes(self) -> np.ndarray:
        """Per-class pixel counts |{i : y(i,k) = 1}|."""
        return self.values.sum(axis=1).astype(np.int64)


class ProbabilityMap(_PlaneMap):
    """Predicted per-pixel class probabilities in [0, 1].

    A small slack (``PROB_SLACK``) around the unit interval is tolerated so
    that finite-difference probes of the losses remain constructible.
    """

    def _check(self, arr: np.ndarray) -> None:
        if not np.isfinite(arr).all():
            raise ValidationError("probabilities must be finite")
        if arr.size and (arr.min() < -PROB_SLACK or arr.max() > 1.0 + PROB_SLACK):
            raise ValidationError(
                f"probabilities must lie in [0, 1] (+/- {PROB_SLACK:g} probe slack); "
                f"got range [{arr.min():g}, {arr.max():g}]"
            )


class GradientMap(_PlaneMap):
    """Per-pixel, per-class partial derivatives of a scalar loss."""

    def _check(self, arr: np.ndarray) -> None:
        if not np.isfinite(arr).all():
            raise ValidationError("gradient values must be finite")


@dataclass(frozen=True, eq=False)
class ClassOverlapStats:
    """Per-class intersection I and union-sum U of a (label, probability) pair."""

    intersection: np.ndarray
    union_sum: np.ndarray

    def __post_init__(self) -> None:
        inter = np.array(self.intersection, dtype=np.float64)
        union = np.array(self.union_sum, dtype=np.float64)
        if inter.shape != union.shape or inter.ndim != 1:
            raise ShapeMismatchError("intersection and union_sum must be 1-D, same length")
        inter.setflags(write=False)
        union.setflags(write=False)
        object.__setattr__(self, "intersection", inter)
        object.__setattr__(self, "union_sum", union)


def require_same_grid(a: _PlaneMap, b: _PlaneMap) -> None:
    """Raise ShapeMismatchError unless both maps share grid and class set."""
    if a.shape != b.shape or a.classes != b.classes:
        raise ShapeMismatchError(
            f"grid/class mismatch: {a.shape.dims} x {a.classes.total} classes vs "
            f"{b.shape.dims} x {b.classes.total} classes"
        )


def overlap_stats(y: LabelMap, s: ProbabilityMap) -> ClassOverlapStats:
    """Per-class I = sum_i y*s and U = sum_i (y + s)."""
    require_same_grid(y, s)
    intersection = (y.values * s.values).sum(axis=1)
    union_sum = (y.values + s.values).sum(axis=1)
    return ClassOverlapStats(intersection, union_sum)


def one_hot_from_indices(idx: np.ndarray, classes: ClassSet) -> LabelMap:
    """Build a one-hot LabelMap from a per-pixel class index map.

    The grid shape is taken from ``idx.shape``; argmax of the result recovers
    ``idx`` exactly.
    """
    idx = np.asarray(idx)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValidationError(f"class indices must be integers, got dtype {idx.dtype}")
    if idx.size == 0:
        raise ValidationError("index map must contain at least one pixel")
    if idx.min() < 0 or idx.max() >= classes.total:
        raise ValidationError(
            f"class indices must lie in [0, {classes.total - 1}], "
            f"got range [{idx.min()}, {idx.max()}]"
        )
    flat = idx.reshape(-1)
    values = np.zeros((classes.total, flat.size))
    values[flat, np.arange(flat.size)] = 1.0
    return LabelMap(GridShape(idx.shape), classes, values)
