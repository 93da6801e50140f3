"""Greedy feature-map filtering calibrated from triplets.

Calibration works on triplets of pooled descriptors: a query scene under
the current conditions, the reference image of the same place, and a
random reference image of a different place.  A channel's value is judged
by the gap it leaves behind: for every candidate channel ``j`` the score

    gap(j) = dist(reference, negative | without j)
           - dist(query, reference | without j)

measures how well the descriptor separates different places from the same
place once ``j`` is gone.  Greedy removal repeatedly drops the channel
whose absence maximizes the gap, until the best single removal improves
the running objective by less than the gradient cut-off (or only one
channel remains).

Per-triplet removal lists are then aggregated: removals are counted per
channel across all calibration images, the final size K is the largest
surviving-channel count any triplet produced, and the K least-removed
channels (ties toward the lower index) form the kept set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import yaml
from sklearn.base import BaseEstimator, TransformerMixin

from .pooling import PooledMatrix, flatten
from .validation import check_kept, check_same_grid


@dataclass(eq=False)
class CalibrationTriplet:
    """Pooled descriptors for one calibration scene.

    ``query`` is the scene under current conditions, ``reference`` the same
    place from the reference traverse, ``negative`` a different place from
    the same reference traverse.  All three must share (channels, slots).
    """

    query: PooledMatrix
    reference: PooledMatrix
    negative: PooledMatrix
    index: int = 0

    def __post_init__(self):
        check_same_grid(self.query, self.reference, "query/reference")
        check_same_grid(self.reference, self.negative, "reference/negative")

    @property
    def channels(self) -> int:
        return self.query.channels


@dataclass
class CalibConfig:
    num_calibration_images: int = 50
    gradient_cutoff: float = 0.1
    rng_seed: int = 0
    negative_exclusion_radius: int = 20  # frames around the true match

    def __post_init__(self):
        if self.num_calibration_images < 1:
            raise ValueError("num_calibration_images must be >= 1")
        if self.gradient_cutoff < 0:
            raise ValueError("gradient_cutoff must be >= 0")
        if self.negative_exclusion_radius < 0:
            raise ValueError("negative_exclusion_radius must be >= 0")


@dataclass
class GreedyOutcome:
    """Result of one per-triplet greedy run.

    ``objective_trace`` starts with the unfiltered gap and appends the
    accepted maximum after every removal, so consecutive differences are
    the per-iteration improvements.  ``separated_at_stop`` records whether
    the same place ended up closer than the different place on the final
    kept set (a diagnostic, not a termination condition).
    """

    removed: list[int]
    objective_trace: list[float]
    separated_at_stop: bool
    iteration_distances: list[tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None


@dataclass
class FilterResult:
    """Aggregated calibration outcome across all triplets."""

    per_image_removed: list[list[int]]
    removal_counts: np.ndarray
    kept_set: np.ndarray

    @property
    def channels(self) -> int:
        return int(self.removal_counts.size)

    @property
    def kept_count(self) -> int:
        return int(self.kept_set.size)


def _sq_contributions(a: PooledMatrix, b: PooledMatrix) -> np.ndarray:
    """Per-channel squared-difference contribution to the L2 distance."""
    diff = a.values - b.values
    return np.einsum("cp,cp->c", diff, diff)


def l2_distance(a: PooledMatrix, b: PooledMatrix, kept: Iterable[int]) -> float:
    """Euclidean distance between the flattened kept-channel descriptors."""
    check_same_grid(a, b)
    idx = check_kept(kept, a.channels)
    return float(np.linalg.norm((a.values - b.values)[idx].ravel()))


def removal_scores(triplet: CalibrationTriplet, kept: Iterable[int]) -> np.ndarray:
    """Score every kept channel by the gap left after removing it alone.

    Returns scores aligned with the kept set in ascending channel order.
    Distances are evaluated through per-channel squared contributions, so
    each candidate costs O(1) after one pass over the kept channels.
    """
    idx = check_kept(kept, triplet.channels)
    if idx.size < 2:
        raise ValueError("removal scoring needs at least 2 kept channels")
    sq_rn = _sq_contributions(triplet.reference, triplet.negative)[idx]
    sq_qr = _sq_contributions(triplet.query, triplet.reference)[idx]
    dist_rn = np.sqrt(np.maximum(sq_rn.sum() - sq_rn, 0.0))
    dist_qr = np.sqrt(np.maximum(sq_qr.sum() - sq_qr, 0.0))
    return dist_rn - dist_qr


def greedy_filter(
    triplet: CalibrationTriplet,
    config: CalibConfig,
    record_distances: bool = False,
) -> GreedyOutcome:
    """Iteratively remove the channel whose absence most widens the gap.

    Stops when the best candidate improves the previous objective by less
    than ``config.gradient_cutoff`` (that candidate is not removed), or
    when a single channel remains.  Ties in the per-iteration argmax break
    toward the lower channel index.

    With ``record_distances=True`` the outcome carries, per iteration, the
    kept-channel array and both distance vectors as seen by the cached
    update path; useful for numerical cross-checks.
    """
    channels = triplet.channels
    if channels < 2:
        raise ValueError("greedy filtering needs at least 2 channels")

    sq_rn_all = _sq_contributions(triplet.reference, triplet.negative)
    sq_qr_all = _sq_contributions(triplet.query, triplet.reference)

    kept = np.arange(channels, dtype=np.intp)
    total_rn = float(sq_rn_all.sum())
    total_qr = float(sq_qr_all.sum())

    score_prev = float(np.sqrt(total_rn) - np.sqrt(total_qr))
    trace = [score_prev]
    removed: list[int] = []
    recorded = [] if record_distances else None

    while kept.size > 1:
        sq_rn = sq_rn_all[kept]
        sq_qr = sq_qr_all[kept]
        dist_rn = np.sqrt(np.maximum(total_rn - sq_rn, 0.0))
        dist_qr = np.sqrt(np.maximum(total_qr - sq_qr, 0.0))
        scores = dist_rn - dist_qr
        best = int(np.argmax(scores))
        max_score = float(scores[best])
        if recorded is not None:
            recorded.append((kept.copy(), dist_rn.copy(), dist_qr.copy()))
        if max_score - score_prev < config.gradient_cutoff:
            break
        worst = int(kept[best])
        removed.append(worst)
        trace.append(max_score)
        total_rn -= float(sq_rn_all[worst])
        total_qr -= float(sq_qr_all[worst])
        kept = np.delete(kept, best)
        score_prev = max_score

    separated = max(total_qr, 0.0) < max(total_rn, 0.0)
    return GreedyOutcome(
        removed=removed,
        objective_trace=trace,
        separated_at_stop=separated,
        iteration_distances=recorded,
    )


def aggregate(per_image_removed: Sequence[Sequence[int]], channels: int) -> FilterResult:
    """Combine per-triplet removal lists into the final kept set.

    The kept-set size K is the largest surviving count of any triplet;
    the kept channels are the K with the fewest removals, ties broken
    toward the lower channel index.
    """
    if len(per_image_removed) == 0:
        raise ValueError("aggregate needs at least one removal list")
    normalized: list[list[int]] = []
    for i, removed in enumerate(per_image_removed):
        arr = np.asarray(list(removed), dtype=np.intp)
        if arr.size and (arr.min() < 0 or arr.max() >= channels):
            raise ValueError(f"removal list {i} has out-of-range channel indices")
        if arr.size != np.unique(arr).size:
            raise ValueError(f"removal list {i} has duplicate channel indices")
        if arr.size >= channels:
            raise ValueError(f"removal list {i} removes every channel")
        normalized.append([int(c) for c in arr])

    counts = np.zeros(channels, dtype=np.int64)
    for removed in normalized:
        counts[removed] += 1
    kept_count = max(channels - len(removed) for removed in normalized)
    ranking = np.argsort(counts, kind="stable")  # stable: ties -> lower index first
    kept = np.sort(ranking[:kept_count]).astype(np.intp)
    return FilterResult(
        per_image_removed=normalized,
        removal_counts=counts,
        kept_set=kept,
    )


def build_triplets(
    query_pooled: Sequence[PooledMatrix],
    ref_pooled: Sequence[PooledMatrix],
    correspondences: Sequence[int],
    config: CalibConfig,
) -> list[CalibrationTriplet]:
    """Assemble calibration triplets with seeded random negatives.

    Uses the first ``config.num_calibration_images`` queries (or all of
    them, when fewer are supplied).  The negative for query ``i`` is drawn
    uniformly from reference indices outside the band
    ``correspondences[i] +/- negative_exclusion_radius``; the draw is
    fixed per triplet and deterministic for a fixed seed.
    """
    n_refs = len(ref_pooled)
    count = min(len(query_pooled), config.num_calibration_images)
    if count == 0:
        raise ValueError("no calibration queries supplied")
    if len(correspondences) < count:
        raise ValueError(
            f"need {count} correspondences, got {len(correspondences)}"
        )
    rng = np.random.default_rng(config.rng_seed)
    radius = config.negative_exclusion_radius
    triplets = []
    for i in range(count):
        true_index = int(correspondences[i])
        if not 0 <= true_index < n_refs:
            raise ValueError(f"correspondence {i} points outside the reference set")
        lo = max(0, true_index - radius)
        hi = min(n_refs - 1, true_index + radius)
        n_candidates = n_refs - (hi - lo + 1)
        if n_candidates <= 0:
            raise ValueError(
                "reference set too small to exclude the radius "
                f"around index {true_index} (radius {radius}, {n_refs} references)"
            )
        draw = int(rng.integers(n_candidates))
        negative_index = draw if draw < lo else draw + (hi - lo + 1)
        triplets.append(
            CalibrationTriplet(
                query=query_pooled[i],
                reference=ref_pooled[true_index],
                negative=ref_pooled[negative_index],
                index=i,
            )
        )
    return triplets


def run_calibration(
    triplets: Sequence[CalibrationTriplet],
    config: CalibConfig,
) -> tuple[FilterResult, list[GreedyOutcome]]:
    """Run the greedy filter per triplet and aggregate the removals."""
    if len(triplets) == 0:
        raise ValueError("no calibration triplets supplied")
    outcomes = [greedy_filter(t, config) for t in triplets]
    result = aggregate([o.removed for o in outcomes], triplets[0].channels)
    return result, outcomes


def save_filter_result(
    result: FilterResult,
    path,
    layer_name: str = "",
    config: CalibConfig | None = None,
) -> None:
    """Serialize a filter result (plus the config that produced it) to YAML."""
    doc = {
        "layer_name": layer_name,
        "channels": result.channels,
        "kept_count": result.kept_count,
        "kept_set": [int(c) for c in result.kept_set],
        "removal_counts": [int(c) for c in result.removal_counts],
        "per_image_removed": [list(r) for r in result.per_image_removed],
    }
    if config is not None:
        doc["config"] = {
            "num_calibration_images": config.num_calibration_images,
            "gradient_cutoff": float(config.gradient_cutoff),
            "rng_seed": config.rng_seed,
            "negative_exclusion_radius": config.negative_exclusion_radius,
        }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_filter_result(path) -> FilterResult:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "removal_counts" not in doc or "kept_set" not in doc:
        raise ValueError(f"{path}: not a filter-result document")
    counts = np.asarray(doc["removal_counts"], dtype=np.int64)
    result = FilterResult(
        per_image_removed=[list(map(int, r)) for r in doc.get("per_image_removed", [])],
        removal_counts=counts,
        kept_set=np.asarray(sorted(int(c) for c in doc["kept_set"]), dtype=np.intp),
    )
    declared = doc.get("kept_count")
    if declared is not None and int(declared) != result.kept_count:
        raise ValueError(f"{path}: kept_count disagrees with kept_set length")
    return result


class FeatureMapFilter(TransformerMixin, BaseEstimator):
    """Channel selector calibrated from triplets, sklearn style.

    Parameters
    ----------
    gradient_cutoff : float, default=0.1
        Minimum per-iteration objective improvement required to keep
        removing channels.
    num_calibration_images : int, default=50
        Upper bound on the number of triplets consumed by ``fit``.
    negative_exclusion_radius : int, default=20
        Only used when triplets are built through
        :func:`build_triplets`; echoed here so the estimator captures the
        full calibration configuration.
    random_state : int, default=0
        Seed for negative sampling in :meth:`fit_traverse`.

    Attributes
    ----------
    n_channels_ : int
        Channel count of the calibration descriptors.
    kept_set_ : ndarray
        Sorted indices of the surviving channels.
    removal_counts_ : ndarray
        Per-channel removal totals across the calibration triplets.
    result_ : FilterResult
        The full aggregation outcome.
    outcomes_ : list of GreedyOutcome
        Per-triplet greedy traces.
    """

    def __init__(
        self,
        gradient_cutoff: float = 0.1,
        num_calibration_images: int = 50,
        negative_exclusion_radius: int = 20,
        random_state: int = 0,
    ):
        self.gradient_cutoff = gradient_cutoff
        self.num_calibration_images = num_calibration_images
        self.negative_exclusion_radius = negative_exclusion_radius
        self.random_state = random_state

    def _config(self) -> CalibConfig:
        return CalibConfig(
            num_calibration_images=self.num_calibration_images,
            gradient_cutoff=self.gradient_cutoff,
            rng_seed=self.random_state,
            negative_exclusion_radius=self.negative_exclusion_radius,
        )

    def fit(self, X: Sequence[CalibrationTriplet], y=None):
        """Calibrate on a sequence of triplets (at most the configured count)."""
        config = self._config()
        triplets = list(X)[: config.num_calibration_images]
        result, outcomes = run_calibration(triplets, config)
        self.n_channels_ = triplets[0].channels
        self.result_ = result
        self.outcomes_ = outcomes
        self.kept_set_ = result.kept_set
        self.removal_counts_ = result.removal_counts
        return self

    def fit_traverse(
        self,
        query_pooled: Sequence[PooledMatrix],
        ref_pooled: Sequence[PooledMatrix],
        correspondences: Sequence[int],
    ):
        """Build triplets from pooled traverses, then fit on them."""
        triplets = build_triplets(query_pooled, ref_pooled, correspondences, self._config())
        return self.fit(triplets)

    def transform(self, X) -> np.ndarray:
        """Flatten pooled matrices down to the kept channels.

        Accepts one :class:`PooledMatrix` or a sequence; returns a 2-d
        array with one flattened descriptor per row.
        """
        if not hasattr(self, "kept_set_"):
            raise ValueError("FeatureMapFilter is not fitted yet")
        matrices = [X] if isinstance(X, PooledMatrix) else list(X)
        return np.vstack([flatten(p, self.kept_set_) for p in matrices])
