"""Forward values and analytic gradients for the segmentation losses.

All losses average over the full class set, background included, and every
``*_grad`` function returns the derivative of the matching ``*_loss`` value so
the pair survives finite-difference checking.  The dice denominators carry the
same epsilon guard in the loss and in the gradient; the soft-overlap loss
("mime") and its fully simplified multi-class variant ("nm") are linear in the
probabilities, so their gradients are constant maps.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ValidationError
from .grid import (
    ClassOverlapStats,
    GradientMap,
    GridShape,
    ClassSet,
    LabelMap,
    ProbabilityMap,
    overlap_stats,
    require_same_grid,
)

__all__ = [
    "LossConfig",
    "MimeWeights",
    "LOSS_IDS",
    "dice_loss",
    "dice_grad",
    "ce_loss",
    "ce_grad",
    "mime_weights",
    "mime_loss",
    "mime_grad",
    "nm_loss",
    "nm_grad",
    "combined_loss",
]

# Floor applied to probabilities inside log and its derivative; softmax
# outputs can underflow to 0 at extreme logits.
CE_CLAMP = 1e-12

LOSS_IDS = ("ce", "dice", "mime", "nm")


@dataclass(frozen=True)
class LossConfig:
    """Shared loss settings.

    epsilon guards every dice denominator (loss and gradient alike).
    lambda_weights optionally stores a loss combination as (loss id, weight)
    pairs; mime_a / mime_b parameterize the mime weight map used whenever a
    "mime" term appears in a combination.
    """

    epsilon: float = 1e-8
    lambda_weights: tuple[tuple[str, float], ...] | None = None
    mime_a: float = 1.9
    mime_b: float = 0.1

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if self.lambda_weights is not None:
            terms = tuple((str(lid), float(w)) for lid, w in self.lambda_weights)
            object.__setattr__(self, "lambda_weights", terms)


@dataclass(frozen=True, eq=False)
class MimeWeights:
    """Precomputed linear weight map: -a on foreground, +b on background."""

    shape: GridShape
    classes: ClassSet
    weight_map: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.weight_map, dtype=np.float64)
        expected = (self.classes.total, self.shape.pixel_count)
        if arr.shape != expected:
            raise ValidationError(f"weight map shape {arr.shape} != {expected}")
        arr.setflags(write=False)
        object.__setattr__(self, "weight_map", arr)


def dice_loss(y: LabelMap, s: ProbabilityMap, cfg: LossConfig = LossConfig()) -> float:
    """Class-averaged soft dice loss: mean_k (1 - 2 I_k / (U_k + eps))."""
    stats = overlap_stats(y, s)
    terms = 1.0 - 2.0 * stats.intersection / (stats.union_sum + cfg.epsilon)
    return float(terms.mean())


def dice_grad(y: LabelMap, s: ProbabilityMap, cfg: LossConfig = LossConfig()) -> GradientMap:
    """Analytic dice gradient; two values per class plane.

    Foreground pixels of class k get -2 (U_k - I_k) / (U_k + eps)^2, background
    pixels get 2 I_k / (U_k + eps)^2, both scaled by the 1/|classes| averaging
    factor of the loss.
    """
    stats = overlap_stats(y, s)
    class_avg = 1.0 / y.classes.total
    denom = (stats.union_sum + cfg.epsilon) ** 2
    fg = -2.0 * (stats.union_sum - stats.intersection) / denom * class_avg
    bg = 2.0 * stats.intersection / denom * class_avg
    values = np.where(y.values == 1.0, fg[:, None], bg[:, None])
    return GradientMap(y.shape, y.classes, values)


def ce_loss(y: LabelMap, s: ProbabilityMap) -> float:
    """Cross-entropy averaged over classes and pixels."""
    require_same_grid(y, s)
    norm = y.classes.total * y.shape.pixel_count
    safe = np.maximum(s.values, CE_CLAMP)
    return float(-(y.values * np.log(safe)).sum() / norm)


def ce_grad(y: LabelMap, s: ProbabilityMap) -> GradientMap:
    """Cross-entropy gradient: -y / (|classes| |pixels| s), zero off the labels."""
    require_same_grid(y, s)
    norm = y.classes.total * y.shape.pixel_count
    values = -y.values / (norm * np.maximum(s.values, CE_CLAMP))
    return GradientMap(y.shape, y.classes, values)


def mime_weights(y: LabelMap, a: float, b: float) -> MimeWeights:
    """Weight map omega = -a*y + b*(1 - y) with a, b > 0."""
    if not (a > 0 and b > 0):
        raise ValidationError(f"mime weights must be positive, got a={a}, b={b}")
    values = -a * y.values + b * (1.0 - y.values)
    return MimeWeights(y.shape, y.classes, values)


def mime_loss(s: ProbabilityMap, w: MimeWeights) -> float:
    """Inner product of the flattened weight map with the probabilities."""
    if s.shape != w.shape or s.classes != w.classes:
        raise ValidationError(
            f"grid/class mismatch: {s.shape.dims} vs {w.shape.dims} "
            f"({s.classes.total} vs {w.classes.total} classes)"
        )
    return float(np.vdot(w.weight_map, s.values))


def mime_grad(w: MimeWeights) -> GradientMap:
    """The mime gradient is the weight map itself, independent of s."""
    return GradientMap(w.shape, w.classes, w.weight_map)


def nm_loss(y: LabelMap, s: ProbabilityMap) -> float:
    """Fully simplified linear loss -y.s; safe for training only when K >= 2."""
    require_same_grid(y, s)
    return float(-np.vdot(y.values, s.values))


def nm_grad(y: LabelMap) -> GradientMap:
    """Gradient of nm_loss: exactly -y."""
    return GradientMap(y.shape, y.classes, -y.values)


def combined_loss(
    terms: Sequence[tuple[str, float]] | Iterable[tuple[str, float]],
    y: LabelMap,
    s: ProbabilityMap,
    cfg: LossConfig = LossConfig(),
) -> tuple[float, GradientMap]:
    """Weighted sum of losses and gradients: sum_j lambda_j (L_j, grad L_j)."""
    terms = list(terms)
    if not terms:
        raise ConfigError("combined loss needs at least one (loss id, weight) term")
    total = 0.0
    grad = np.zeros((y.classes.total, y.shape.pixel_count))
    for loss_id, lam in terms:
        if loss_id == "dice":
            value = dice_loss(y, s, cfg)
            g = dice_grad(y, s, cfg).values
        elif loss_id == "ce":
            value = ce_loss(y, s)
            g = ce_grad(y, s).values
        elif loss_id == "mime":
            w = mime_weights(y, cfg.mime_a, cfg.mime_b)
            value = mime_loss(s, w)
            g = w.weight_map
        elif loss_id == "nm":
            value = nm_loss(y, s)
            g = -y.values
        else:
            raise ConfigError(f"unknown loss id {loss_id!r}; expected one of {LOSS_IDS}")
        total += lam * value
        grad = grad + lam * g
    return total, GradientMap(y.shape, y.classes, grad)
