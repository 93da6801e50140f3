"""Condition-robust place recognition via calibrated feature-map filtering."""

from .tensor_io import (
    FeatureTensor,
    ManifestEntry,
    DatasetManifest,
    TensorFormatError,
    BadMagicError,
    VersionMismatchError,
    TruncatedPayloadError,
    ManifestError,
    read_tensor,
    write_tensor,
    load_manifest,
    save_manifest,
    load_traverse,
)
from .pooling import PooledMatrix, PyramidPooler, pyramid_pool, flatten
from .filtering import (
    CalibConfig,
    CalibrationTriplet,
    FilterResult,
    GreedyOutcome,
    FeatureMapFilter,
    l2_distance,
    removal_scores,
    greedy_filter,
    aggregate,
    build_triplets,
    run_calibration,
    save_filter_result,
    load_filter_result,
)
from .matching import (
    MatcherConfig,
    MatchOutcome,
    TemplateMatcher,
    cosine_distance,
    normalize_scores,
    quality_ratio,
    match_query,
)
from .evaluation import (
    EvalConfig,
    GroundTruth,
    PRPoint,
    PRCurve,
    TimingReport,
    is_correct,
    f1_score,
    pr_sweep,
    timing_report,
    default_thresholds,
)
from .synth import SynthParams, SynthDataset, choose_signal_channels, generate, write_dataset

__version__ = "0.1.0"

__all__ = [
    "FeatureTensor",
    "ManifestEntry",
    "DatasetManifest",
    "TensorFormatError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedPayloadError",
    "ManifestError",
    "read_tensor",
    "write_tensor",
    "load_manifest",
    "save_manifest",
    "load_traverse",
    "PooledMatrix",
    "PyramidPooler",
    "pyramid_pool",
    "flatten",
    "CalibConfig",
    "CalibrationTriplet",
    "FilterResult",
    "GreedyOutcome",
    "FeatureMapFilter",
    "l2_distance",
    "removal_scores",
    "greedy_filter",
    "aggregate",
    "build_triplets",
    "run_calibration",
    "save_filter_result",
    "load_filter_result",
    "MatcherConfig",
    "MatchOutcome",
    "TemplateMatcher",
    "cosine_distance",
    "normalize_scores",
    "quality_ratio",
    "match_query",
    "EvalConfig",
    "GroundTruth",
    "PRPoint",
    "PRCurve",
    "TimingReport",
    "is_correct",
    "f1_score",
    "pr_sweep",
    "timing_report",
    "default_thresholds",
    "SynthParams",
    "SynthDataset",
    "choose_signal_channels",
    "generate",
    "write_dataset",
    "__version__",
]
