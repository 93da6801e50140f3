"""Synthetic traverses with planted condition-stable channels, plus oracles.

Each place gets a per-place pattern on the signal channels that is
identical in both conditions, so those channels carry place identity
across the appearance change.  Noise channels are redrawn independently
per condition (scaled by ``condition_noise_scale``) and the query
condition additionally shifts them by ``appearance_shift``, so they
correlate with the condition, not the place.  The generator is
deterministic: every image draws from an RNG keyed by (seed, place,
condition), so generation order or parallelism cannot change the output.

The module also hosts deliberately naive oracles used to cross-check the
fast implementations: they rebuild full descriptors per candidate instead
of reusing cached per-channel contributions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .filtering import CalibrationTriplet
from .pooling import PooledMatrix, flatten
from .tensor_io import DatasetManifest, FeatureTensor, ManifestEntry, save_manifest, write_tensor
from .validation import check_kept

_REF_CONDITION = 0
_QUERY_CONDITION = 1

PLACE_SPACING_METERS = 10.0


@dataclass
class SynthParams:
    num_places: int = 300
    channels: int = 64
    width: int = 8
    height: int = 8
    signal_channels: tuple[int, ...] = tuple(range(16))
    noise_channels: tuple[int, ...] | None = None  # None: complement of signal
    # defaults tuned so that filtering helps a lot but the task stays nontrivial
    condition_noise_scale: float = 1.2
    appearance_shift: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.num_places < 1 or self.channels < 1 or self.width < 1 or self.height < 1:
            raise ValueError("num_places, channels, width, height must be positive")
        if self.condition_noise_scale < 0:
            raise ValueError("condition_noise_scale must be >= 0")
        signal = tuple(sorted(set(int(c) for c in self.signal_channels)))
        if len(signal) != len(tuple(self.signal_channels)):
            raise ValueError("signal_channels contains duplicates")
        if signal and (signal[0] < 0 or signal[-1] >= self.channels):
            raise ValueError("signal_channels out of range")
        complement = tuple(c for c in range(self.channels) if c not in signal)
        if self.noise_channels is None:
            noise = complement
        else:
            noise = tuple(sorted(set(int(c) for c in self.noise_channels)))
            if noise != complement:
                raise ValueError(
                    "signal and noise channels must partition the channel range"
                )
        self.signal_channels = signal
        self.noise_channels = noise


@dataclass
class SynthDataset:
    """In-memory mirrored traverses: one reference and one query per place."""

    params: SynthParams
    reference: list[FeatureTensor]
    query: list[FeatureTensor]
    correspondences: list[int]  # query i matches reference correspondences[i]

    def positions(self) -> np.ndarray:
        spacing = PLACE_SPACING_METERS
        return np.asarray(
            [(spacing * p, 0.0) for p in range(self.params.num_places)], dtype=np.float64
        )


def choose_signal_channels(channels: int, count: int, seed: int) -> tuple[int, ...]:
    """Pick a seeded random subset of channels to carry place identity."""
    if not 0 <= count <= channels:
        raise ValueError(f"signal channel count must lie in [0, {channels}]")
    rng = np.random.default_rng([seed, 0x51])
    return tuple(sorted(int(c) for c in rng.choice(channels, size=count, replace=False)))


def _place_tensor(params: SynthParams, place: int, condition: int) -> FeatureTensor:
    shape = (params.height, params.width)
    data = np.empty((*shape, params.channels), dtype=np.float64)

    signal_rng = np.random.default_rng([params.seed, place])
    signal = signal_rng.standard_normal((*shape, len(params.signal_channels)))
    data[:, :, list(params.signal_channels)] = signal

    noise_rng = np.random.default_rng([params.seed, place, condition])
    noise = noise_rng.standard_normal((*shape, len(params.noise_channels)))
    noise = noise * params.condition_noise_scale
    if condition == _QUERY_CONDITION:
        noise = noise + params.appearance_shift
    data[:, :, list(params.noise_channels)] = noise
    return FeatureTensor(data)


def generate(params: SynthParams) -> SynthDataset:
    """Generate mirrored reference/query traverses over the same places.

    Both traverses visit every place in order, so correspondences are the
    identity.  Callers slice the query traverse into calibration and
    evaluation segments as needed.
    """
    reference = [
        _place_tensor(params, p, _REF_CONDITION) for p in range(params.num_places)
    ]
    query = [_place_tensor(params, p, _QUERY_CONDITION) for p in range(params.num_places)]
    return SynthDataset(
        params=params,
        reference=reference,
        query=query,
        correspondences=list(range(params.num_places)),
    )


def _write_traverse(
    tensors: Sequence[FeatureTensor],
    ids: Sequence[str],
    positions: Sequence[tuple[float, float]],
    out_dir: Path,
    layer_name: str,
) -> None:
    tensor_dir = out_dir / "tensors"
    tensor_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for tensor, image_id, position in zip(tensors, ids, positions):
        rel = f"tensors/{image_id}.fmap"
        write_tensor(tensor, out_dir / rel)
        entries.append(ManifestEntry(id=image_id, tensor_path=rel, position=position))
    manifest = DatasetManifest(entries=entries, gt_mode="frame", layer_name=layer_name)
    save_manifest(manifest, out_dir / "manifest.yaml")


def write_dataset(
    dataset: SynthDataset,
    out_dir,
    num_calibration: int = 50,
    num_queries: int | None = None,
    layer_name: str = "synthetic",
) -> dict:
    """Write reference/calibration/query traverses plus correspondences.

    The calibration traverse is the first ``num_calibration`` query-condition
    images; the evaluation queries are the next ``num_queries`` (default:
    everything left).  Returns a summary of what was written.
    """
    params = dataset.params
    n = params.num_places
    if not 0 < num_calibration < n:
        raise ValueError("num_calibration must lie in (0, num_places)")
    remaining = n - num_calibration
    if num_queries is None:
        num_queries = remaining
    if not 0 < num_queries <= remaining:
        raise ValueError(f"num_queries must lie in (0, {remaining}]")

    out_dir = Path(out_dir)
    positions = [tuple(p) for p in dataset.positions()]

    _write_traverse(
        dataset.reference,
        [f"ref_{p:05d}" for p in range(n)],
        positions,
        out_dir / "reference",
        layer_name,
    )

    calib_slice = slice(0, num_calibration)
    _write_traverse(
        dataset.query[calib_slice],
        [f"cal_{p:05d}" for p in range(num_calibration)],
        positions[calib_slice],
        out_dir / "calibration",
        layer_name,
    )
    calib_corr = dataset.correspondences[calib_slice]
    with open(out_dir / "calibration" / "correspondences.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump([int(c) for c in calib_corr], fh)

    query_slice = slice(num_calibration, num_calibration + num_queries)
    _write_traverse(
        dataset.query[query_slice],
        [f"qry_{p:05d}" for p in range(num_calibration, num_calibration + num_queries)],
        positions[query_slice],
        out_dir / "query",
        layer_name,
    )
    query_corr = dataset.correspondences[query_slice]
    with open(out_dir / "query" / "correspondences.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump([int(c) for c in query_corr], fh)

    summary = {
        "num_places": n,
        "num_calibration": num_calibration,
        "num_queries": num_queries,
        "channels": params.channels,
        "width": params.width,
        "height": params.height,
        "signal_channels": [int(c) for c in params.signal_channels],
        "condition_noise_scale": float(params.condition_noise_scale),
        "appearance_shift": float(params.appearance_shift),
        "seed": params.seed,
    }
    with open(out_dir / "params.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(summary, fh, sort_keys=False)
    return summary


def brute_force_best_removal(
    triplet: CalibrationTriplet, kept: Iterable[int]
) -> tuple[int, float]:
    """Exhaustive single-removal search by full descriptor reconstruction.

    For every kept channel, rebuilds both flattened descriptors without it
    and evaluates the gap directly.  Returns (channel, score) with ties
    broken toward the lower channel index.  Intentionally naive; used as
    an oracle against the cached-contribution implementation.
    """
    idx = check_kept(kept, triplet.channels)
    if idx.size < 2:
        raise ValueError("removal scoring needs at least 2 kept channels")
    best_channel = -1
    best_score = -np.inf
    for j in idx:
        sub = [int(c) for c in idx if c != j]
        dist_rn = np.linalg.norm(
            flatten(triplet.reference, sub) - flatten(triplet.negative, sub)
        )
        dist_qr = np.linalg.norm(
            flatten(triplet.query, sub) - flatten(triplet.reference, sub)
        )
        score = float(dist_rn - dist_qr)
        if score > best_score:
            best_channel = int(j)
            best_score = score
    return best_channel, best_score
