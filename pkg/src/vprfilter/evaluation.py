"""Ground-truth checks, precision/recall sweeps, and timing summaries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .matching import MatchOutcome


@dataclass
class EvalConfig:
    gt_mode: str = "frame"
    tolerance: float = 0.0  # frames (frame mode) or meters (metric mode)
    thresholds: Sequence[float] | None = None  # None: grid over observed qualities

    def __post_init__(self):
        if self.gt_mode not in ("frame", "metric"):
            raise ValueError(f"gt_mode must be 'frame' or 'metric', got {self.gt_mode!r}")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.thresholds is not None:
            t = np.asarray(self.thresholds, dtype=np.float64)
            if t.size == 0 or not np.all(np.diff(t) > 0):
                raise ValueError("thresholds must be a non-empty, strictly increasing list")


@dataclass
class GroundTruth:
    """Per-query truth: a reference index (frame mode) or positions (metric)."""

    true_index: int | None = None
    query_position: tuple[float, float] | None = None
    ref_positions: np.ndarray | None = None  # shared (n_refs, 2) array


@dataclass
class PRPoint:
    threshold: float
    precision: float
    recall: float
    f1: float


@dataclass
class PRCurve:
    points: list[PRPoint]
    max_f1: float

    @property
    def best_threshold(self) -> float:
        best = max(self.points, key=lambda p: p.f1)
        return best.threshold


@dataclass
class TimingReport:
    mean_filtered: float
    mean_unfiltered: float
    ratio: float
    dimensional_reduction: float
    n_filtered: int
    n_unfiltered: int


def is_correct(outcome: MatchOutcome, truth: GroundTruth, config: EvalConfig) -> bool:
    """Whether the proposed match lies within the ground-truth tolerance."""
    if config.gt_mode == "frame":
        if truth.true_index is None:
            raise ValueError("frame-mode truth needs a true reference index")
        return abs(outcome.best_index - truth.true_index) <= config.tolerance
    if truth.query_position is None or truth.ref_positions is None:
        raise ValueError("metric-mode truth needs query and reference positions")
    matched = np.asarray(truth.ref_positions, dtype=np.float64)[outcome.best_index]
    delta = matched - np.asarray(truth.query_position, dtype=np.float64)
    return float(np.hypot(delta[0], delta[1])) <= config.tolerance


def default_thresholds(qualities: np.ndarray, count: int = 100) -> np.ndarray:
    """Evenly spaced grid across the observed quality range."""
    lo, hi = float(qualities.min()), float(qualities.max())
    if lo == hi:
        return np.asarray([lo])
    return np.unique(np.linspace(lo, hi, count))


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def pr_sweep(
    outcomes: Sequence[MatchOutcome],
    truths: Sequence[GroundTruth],
    config: EvalConfig,
) -> PRCurve:
    """Precision/recall/F1 across quality thresholds; accepts quality >= t.

    Precision with zero accepted queries is defined as 1.0.
    """
    if len(outcomes) == 0:
        raise ValueError("pr_sweep needs at least one match outcome")
    if len(truths) != len(outcomes):
        raise ValueError("need exactly one truth per outcome")
    qualities = np.asarray([o.quality for o in outcomes], dtype=np.float64)
    correct = np.asarray(
        [is_correct(o, t, config) for o, t in zip(outcomes, truths)], dtype=bool
    )
    if config.thresholds is not None:
        thresholds = np.asarray(config.thresholds, dtype=np.float64)
    else:
        thresholds = default_thresholds(qualities)

    total = qualities.size
    points = []
    for t in thresholds:
        accepted = qualities >= t
        n_accepted = int(accepted.sum())
        n_correct = int((accepted & correct).sum())
        precision = 1.0 if n_accepted == 0 else n_correct / n_accepted
        recall = n_correct / total
        points.append(PRPoint(float(t), precision, recall, f1_score(precision, recall)))
    return PRCurve(points=points, max_f1=max(p.f1 for p in points))


def timing_report(
    kept: Sequence[int],
    channels: int,
    filtered_times: Sequence[float],
    unfiltered_times: Sequence[float],
) -> TimingReport:
    """Mean per-query times, their ratio, and the dimensional reduction."""
    filtered = np.asarray(filtered_times, dtype=np.float64)
    unfiltered = np.asarray(unfiltered_times, dtype=np.float64)
    if filtered.size == 0 or unfiltered.size == 0:
        raise ValueError("both timing lists must be non-empty")
    mean_filtered = float(filtered.mean())
    mean_unfiltered = float(unfiltered.mean())
    return TimingReport(
        mean_filtered=mean_filtered,
        mean_unfiltered=mean_unfiltered,
        ratio=mean_filtered / mean_unfiltered,
        dimensional_reduction=len(set(int(k) for k in kept)) / channels,
        n_filtered=filtered.size,
        n_unfiltered=unfiltered.size,
    )
