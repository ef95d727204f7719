"""Independent gradient verification and analysis.

The finite-difference oracle never calls any analytic gradient code; it only
re-evaluates the forward loss at perturbed probabilities.  The audits quantify
the structure the dice gradient is supposed to have: at most two distinct
values per class plane, magnitudes below 2/(U + eps) per class (after the
1/|classes| averaging), and a narrow dynamic range.

Dynamic range convention: 10 * log10(max |g| / min nonzero |g|), taken
globally over all classes and pixels.

Audit reports serialize to UTF-8 JSON with the keys
{"max_rel_error", "distinct_values", "bound_violations", "dynamic_range_db"}.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import OracleError, UndefinedRangeError, ValidationError
from .grid import ClassOverlapStats, GradientMap, ProbabilityMap
from .imgio import write_pfm

__all__ = [
    "FD_STEP",
    "finite_diff_grad",
    "max_relative_error",
    "audit_two_valued",
    "audit_bound",
    "dynamic_range_db",
    "export_gradient_map",
    "GradAuditReport",
]

FD_STEP = 1e-5

# Absolute slack added to the per-class bound before counting a violation.
BOUND_SLACK = 1e-12


def finite_diff_grad(
    loss_fn: Callable[[ProbabilityMap], float],
    s: ProbabilityMap,
    h: float = FD_STEP,
) -> GradientMap:
    """Central-difference gradient of a scalar loss with respect to s.

    Each coordinate is perturbed by +/- h without clamping, so probes may exit
    [0, 1] by h; the loss functions tolerate that much slack.
    """
    if not h > 0:
        raise ValidationError(f"step size must be positive, got {h}")
    base = np.array(s.values)
    grad = np.empty_like(base)
    for idx in np.ndindex(base.shape):
        orig = base[idx]
        base[idx] = orig + h
        hi = loss_fn(ProbabilityMap(s.shape, s.classes, base))
        base[idx] = orig - h
        lo = loss_fn(ProbabilityMap(s.shape, s.classes, base))
        base[idx] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise OracleError(f"loss not finite at probe {idx}: {hi}, {lo}")
        grad[idx] = (hi - lo) / (2.0 * h)
    return GradientMap(s.shape, s.classes, grad)


def max_relative_error(analytic: GradientMap, numeric: GradientMap) -> float:
    """max |a - n| / max(1, |a|, |n|) over all coordinates."""
    a = analytic.values
    n = numeric.values
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float((np.abs(a - n) / denom).max())


def audit_two_valued(g: GradientMap, tol: float = 1e-12) -> list[int]:
    """Distinct gradient values per class plane.

    Counts the equivalence classes of the transitive closure of |x - y| <= tol:
    sorted values are clustered wherever consecutive gaps exceed tol.
    """
    if tol < 0:
        raise ValidationError(f"tolerance must be non-negative, got {tol}")
    counts = []
    for row in g.values:
        ordered = np.sort(row)
        counts.append(1 + int((np.diff(ordered) > tol).sum()))
    return counts


def audit_bound(
    g: GradientMap,
    stats: ClassOverlapStats,
    class_avg: float,
    epsilon: float = 1e-8,
) -> int:
    """Count pixels whose |g| exceeds class_avg * 2 / (U + eps).

    Zero for any gradient produced by dice_grad with matching stats; a scaled
    copy serves as the negative control.
    """
    if stats.union_sum.shape[0] != g.classes.total:
        raise ValidationError(
            f"stats cover {stats.union_sum.shape[0]} classes, gradient has {g.classes.total}"
        )
    limit = class_avg * 2.0 / (stats.union_sum + epsilon) + BOUND_SLACK
    return int((np.abs(g.values) > limit[:, None]).sum())


def dynamic_range_db(g: GradientMap) -> float:
    """10 * log10(max |g| / min nonzero |g|) over all classes and pixels."""
    mags = np.abs(g.values)
    nonzero = mags[mags > 0.0]
    if nonzero.size == 0:
        raise UndefinedRangeError("dynamic range undefined for an all-zero gradient map")
    return float(10.0 * np.log10(nonzero.max() / nonzero.min()))


def export_gradient_map(g: GradientMap, path: str | Path) -> list[Path]:
    """Write one PFM file per class plane, named <path>_k<k>.pfm."""
    if g.shape.ndim > 2:
        raise ValidationError(f"PFM export supports 1-D and 2-D grids, got {g.shape.dims}")
    written = []
    for k, plane in enumerate(g.planes()):
        if plane.ndim == 1:
            plane = plane.reshape(1, -1)
        target = Path(f"{path}_k{k}.pfm")
        write_pfm(target, plane)
        written.append(target)
    return written


@dataclass(frozen=True)
class GradAuditReport:
    """Summary of one audit run over the losses under test."""

    max_rel_error: float
    distinct_values: tuple[int, ...]
    bound_violations: int
    dynamic_range_db: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "distinct_values", tuple(int(c) for c in self.distinct_values))
        if self.max_rel_error < 0 or self.bound_violations < 0:
            raise ValidationError("audit counters must be non-negative")

    def to_json(self) -> str:
        payload = {
            "max_rel_error": self.max_rel_error,
            "distinct_values": list(self.distinct_values),
            "bound_violations": self.bound_violations,
            "dynamic_range_db": self.dynamic_range_db,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        return path
