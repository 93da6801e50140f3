"""Single-frame place recognition over pooled descriptors.

A query descriptor is compared against every reference template with the
cosine distance.  The distance vector is normalized to [0.001, 0.999]
(best match highest), and match confidence is the ratio between the best
score and the best score outside a window around the best match.  A
uniform distance vector normalizes to 0.5 everywhere with quality 1,
signalling "no confident match".
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .pooling import PooledMatrix, flatten
from .validation import check_kept, check_vector_pair

SCORE_MIN = 0.001
SCORE_MAX = 0.999


@dataclass
class MatcherConfig:
    exclusion_window: int = 10  # half-width, frames

    def __post_init__(self):
        if self.exclusion_window < 0:
            raise ValueError("exclusion_window must be >= 0")


@dataclass(eq=False)
class MatchOutcome:
    """Best-template decision for one query.

    ``normalized_scores`` spans [0.001, 0.999] with the best match at
    0.999, except in the uniform-distance degenerate case where every
    entry is 0.5.  ``quality >= 1`` always; 1 means no confident match.
    """

    query_id: str
    best_index: int
    quality: float
    best_distance: float
    normalized_scores: np.ndarray | None = None


def cosine_distance(a, b) -> float:
    """1 - cosine similarity, in [0, 2]; 1.0 when either vector has norm 0."""
    a, b = check_vector_pair(a, b)
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 1.0
    d = 1.0 - float(np.dot(a, b)) / (norm_a * norm_b)
    return float(min(max(d, 0.0), 2.0))


def normalize_scores(distances) -> np.ndarray:
    """Affinely map distances to scores in [0.001, 0.999], best match highest.

    A constant distance vector maps to 0.5 everywhere.
    """
    d = np.asarray(distances, dtype=np.float64).ravel()
    if d.size < 2:
        raise ValueError("score normalization needs at least 2 distances")
    lo, hi = float(d.min()), float(d.max())
    if hi == lo:
        return np.full(d.size, 0.5)
    # convex blend lands exactly on both endpoints; the plain affine form
    # 0.001 + 0.998 * frac rounds an ulp past 0.999 at the best match
    frac = (d - lo) / (hi - lo)
    return np.clip(SCORE_MAX * (1.0 - frac) + SCORE_MIN * frac, SCORE_MIN, SCORE_MAX)


def quality_ratio(scores: np.ndarray, best_index: int, window: int) -> float:
    """Best-score-to-runner-up ratio, runner-up outside [best-w, best+w].

    Returns 1.0 if no index lies outside the window.  Callers handle the
    degenerate uniform case before calling.
    """
    scores = np.asarray(scores, dtype=np.float64)
    outside = np.ones(scores.size, dtype=bool)
    lo = max(0, best_index - window)
    hi = min(scores.size - 1, best_index + window)
    outside[lo : hi + 1] = False
    if not outside.any():
        return 1.0
    return float(SCORE_MAX / scores[outside].max())


def _distance_row(matrix: np.ndarray, norms: np.ndarray, query_vec: np.ndarray) -> np.ndarray:
    """Cosine distance of one query vector against a stacked template matrix."""
    q_norm = float(np.linalg.norm(query_vec))
    if q_norm == 0.0:
        return np.ones(matrix.shape[0])
    distances = np.ones(matrix.shape[0])
    nonzero = norms > 0.0
    sims = matrix[nonzero] @ query_vec / (norms[nonzero] * q_norm)
    distances[nonzero] = 1.0 - sims
    return np.clip(distances, 0.0, 2.0)


class TemplateMatcher(BaseEstimator):
    """Reference-database matcher with precomputed flattened templates.

    ``fit`` flattens each reference descriptor down to the kept channels
    and caches the template matrix plus row norms, so per-query work is a
    single matrix-vector product followed by O(n_refs) bookkeeping.
    """

    def __init__(self, exclusion_window: int = 10):
        self.exclusion_window = exclusion_window

    def fit(self, X: Sequence[PooledMatrix], y=None, kept: Iterable[int] | None = None):
        refs = list(X)
        if len(refs) < 2:
            raise ValueError("matching needs at least 2 reference templates")
        channels = refs[0].channels
        idx = check_kept(kept if kept is not None else range(channels), channels)
        self.kept_ = idx
        self.n_channels_ = channels
        self.templates_ = np.vstack([flatten(r, idx) for r in refs])
        self.template_norms_ = np.linalg.norm(self.templates_, axis=1)
        return self

    def _check_fitted(self):
        if not hasattr(self, "templates_"):
            raise ValueError("TemplateMatcher is not fitted yet")

    def match_one(self, query: PooledMatrix, query_id: str = "") -> MatchOutcome:
        self._check_fitted()
        config = MatcherConfig(exclusion_window=self.exclusion_window)
        query_vec = flatten(query, self.kept_)
        distances = _distance_row(self.templates_, self.template_norms_, query_vec)
        return _outcome_from_distances(distances, config, query_id)

    def match(self, X: Sequence[PooledMatrix], ids: Sequence[str] | None = None) -> list[MatchOutcome]:
        queries = list(X)
        if ids is None:
            ids = [str(i) for i in range(len(queries))]
        return [self.match_one(q, i) for q, i in zip(queries, ids)]

    def predict(self, X: Sequence[PooledMatrix]) -> np.ndarray:
        """Best reference index per query (sklearn-style surface)."""
        return np.asarray([o.best_index for o in self.match(X)], dtype=np.intp)

    def timed_match(
        self, X: Sequence[PooledMatrix], ids: Sequence[str] | None = None
    ) -> tuple[list[MatchOutcome], list[float]]:
        """Like :meth:`match`, also returning per-query wall-clock seconds."""
        queries = list(X)
        if ids is None:
            ids = [str(i) for i in range(len(queries))]
        outcomes, times = [], []
        for q, i in zip(queries, ids):
            start = time.perf_counter()
            outcomes.append(self.match_one(q, i))
            times.append(time.perf_counter() - start)
        return outcomes, times


def _outcome_from_distances(
    distances: np.ndarray, config: MatcherConfig, query_id: str
) -> MatchOutcome:
    best = int(np.argmin(distances))  # ties -> lowest reference index
    scores = normalize_scores(distances)
    if float(distances.max()) == float(distances.min()):
        quality = 1.0  # uniform distances: reject at any threshold > 1
    else:
        quality = quality_ratio(scores, best, config.exclusion_window)
    return MatchOutcome(
        query_id=query_id,
        best_index=best,
        quality=quality,
        best_distance=float(distances[best]),
        normalized_scores=scores,
    )


def match_query(
    query: PooledMatrix,
    refs: Sequence[PooledMatrix],
    kept: Iterable[int],
    config: MatcherConfig | None = None,
    query_id: str = "",
) -> MatchOutcome:
    """One-shot form of :class:`TemplateMatcher` for a single query."""
    if config is None:
        config = MatcherConfig()
    matcher = TemplateMatcher(exclusion_window=config.exclusion_window)
    matcher.fit(refs, kept=kept)
    return matcher.match_one(query, query_id)
