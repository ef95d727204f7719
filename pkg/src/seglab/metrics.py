"""Evaluation metrics: hard Dice coefficient and classwise expected
calibration error (ClECE).

DSC uses a small epsilon guard in the denominator; a class that is empty in
both maps scores 1.0 by convention.  ClECE bins every pixel of a class plane
into 10 equal-width confidence bins [j/10, (j+1)/10), last bin closed, and
normalizes by the full pixel count.  Reported means exclude the background
class.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grid import LabelMap, ProbabilityMap, require_same_grid

__all__ = [
    "DSC_EPS",
    "DEFAULT_BINS",
    "BinStat",
    "ClassMetricReport",
    "dsc",
    "argmax_predict",
    "clece",
    "clece_report",
    "evaluate_sample",
]

DSC_EPS = 1e-8
DEFAULT_BINS = 10


def dsc(y: LabelMap, pred: LabelMap, eps: float = DSC_EPS) -> np.ndarray:
    """Per-class hard Dice: 2|A n B| / (|A| + |B| + eps); both-empty -> 1.0."""
    require_same_grid(y, pred)
    inter = (y.values * pred.values).sum(axis=1)
    sizes = y.values.sum(axis=1) + pred.values.sum(axis=1)
    return np.where(sizes > 0, 2.0 * inter / (sizes + eps), 1.0)


def argmax_predict(s: ProbabilityMap) -> LabelMap:
    """One-hot of the per-pixel argmax; ties go to the lowest class index."""
    idx = np.argmax(s.values, axis=0)
    planes = np.zeros_like(s.values)
    planes[idx, np.arange(idx.size)] = 1.0
    return LabelMap(s.shape, s.classes, planes)


@dataclass(frozen=True)
class BinStat:
    """Diagnostics for one confidence bin of one class plane."""

    count: int
    confidence: float  # mean predicted probability in the bin (0.0 if empty)
    accuracy: float  # mean label in the bin (0.0 if empty)


def clece_report(
    y: LabelMap, s: ProbabilityMap, bins: int = DEFAULT_BINS
) -> tuple[np.ndarray, list[list[BinStat]]]:
    """Per-class ClECE values plus the underlying bin diagnostics."""
    require_same_grid(y, s)
    if bins < 1:
        raise ValidationError(f"need at least one bin, got {bins}")
    n = y.shape.pixel_count
    values = np.zeros(y.classes.total)
    diagnostics: list[list[BinStat]] = []
    for k in range(y.classes.total):
        conf = s.values[k]
        acc = y.values[k]
        bin_idx = np.clip(np.floor(conf * bins).astype(np.int64), 0, bins - 1)
        stats = []
        total = 0.0
        for b in range(bins):
            members = bin_idx == b
            count = int(members.sum())
            if count == 0:
                stats.append(BinStat(count=0, confidence=0.0, accuracy=0.0))
                continue
            mean_conf = float(conf[members].mean())
            mean_acc = float(acc[members].mean())
            stats.append(BinStat(count=count, confidence=mean_conf, accuracy=mean_acc))
            total += count / n * abs(mean_acc - mean_conf)
        values[k] = total
        diagnostics.append(stats)
    return values, diagnostics


def clece(y: LabelMap, s: ProbabilityMap, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Per-class classwise expected calibration error."""
    values, _ = clece_report(y, s, bins)
    return values


@dataclass(frozen=True)
class ClassMetricReport:
    """Per-class DSC and ClECE for one sample, means over object classes."""

    dsc: np.ndarray  # (total,)
    clece: np.ndarray  # (total,)
    mean_dsc: float
    mean_clece: float
    bins: list[list[BinStat]]


def evaluate_sample(
    y: LabelMap, s: ProbabilityMap, bins: int = DEFAULT_BINS
) -> ClassMetricReport:
    """Hard-prediction DSC plus calibration for one (label, probability) pair."""
    pred = argmax_predict(s)
    dice_values = dsc(y, pred)
    cal_values, diagnostics = clece_report(y, s, bins)
    return ClassMetricReport(
        dsc=dice_values,
        clece=cal_values,
        mean_dsc=float(dice_values[1:].mean()),
        mean_clece=float(cal_values[1:].mean()),
        bins=diagnostics,
    )
