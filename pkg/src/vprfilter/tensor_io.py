"""Binary activation-tensor files and traverse manifests.

A feature tensor holds one image's convolutional activations as a dense
W x H x C volume (C = number of feature maps).  Tensor files use a fixed
little-endian layout:

    offset  size     field
    ------  -------  -------------------------------------------
    0       4        magic ``FMAP``
    4       1        format version, currently 1
    5       4        width  W  (uint32)
    9       4        height H  (uint32)
    13      4        channels C (uint32)
    17      4*W*H*C  float32 activations, row-major [H][W][C]

Channel values of one spatial cell are contiguous, so per-cell channel
vectors slice cheaply during pooling.  Trailing bytes after the payload
are rejected: a file is either exact or malformed.

A traverse manifest is a YAML document binding tensor files (in traverse
order) to image ids and, optionally, planar positions in meters.
Relative ``tensor_path`` entries resolve against the manifest's own
directory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

MAGIC = b"FMAP"
FORMAT_VERSION = 1
HEADER_SIZE = 17  # magic + version byte + three uint32 dims

_DIMS = struct.Struct("<III")

GT_MODES = ("frame", "metric")


class TensorFormatError(ValueError):
    """A tensor file does not conform to the binary layout."""


class BadMagicError(TensorFormatError):
    """File does not start with the ``FMAP`` magic."""


class VersionMismatchError(TensorFormatError):
    """File declares a format version this reader does not support."""


class TruncatedPayloadError(TensorFormatError):
    """File ends before the declared W*H*C activations."""


class ManifestError(ValueError):
    """A manifest document is malformed or violates its invariants."""


@dataclass(eq=False)
class FeatureTensor:
    """One image's activation volume, stored as float32 with shape (H, W, C)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32))
        if arr.ndim != 3:
            raise ValueError(f"tensor data must be 3-d (H, W, C), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"tensor dimensions must be positive, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("tensor contains non-finite values")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def write_tensor(tensor: FeatureTensor, path) -> None:
    """Write a tensor to ``path`` in the binary layout described above."""
    data = np.ascontiguousarray(tensor.data, dtype="<f4")
    if not np.isfinite(data).all():
        raise ValueError("refusing to write tensor with non-finite values")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", FORMAT_VERSION))
        fh.write(_DIMS.pack(tensor.width, tensor.height, tensor.channels))
        fh.write(data.tobytes())


def read_tensor(path) -> FeatureTensor:
    """Read a tensor file, raising a distinct error per corruption mode."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: not a feature-tensor file (bad magic)")
    if len(buf) < HEADER_SIZE:
        raise TruncatedPayloadError(f"{path}: header truncated ({len(buf)} bytes)")
    version = buf[4]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: unsupported format version {version} (expected {FORMAT_VERSION})"
        )
    width, height, channels = _DIMS.unpack_from(buf, 5)
    expected = width * height * channels
    payload = np.frombuffer(buf, dtype="<f4", offset=HEADER_SIZE)
    if payload.size < expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {payload.size} floats, header declares {expected}"
        )
    if payload.size > expected:
        raise TensorFormatError(
            f"{path}: {payload.size - expected} unexpected trailing floats"
        )
    return FeatureTensor(payload.reshape(height, width, channels).copy())


@dataclass
class ManifestEntry:
    id: str
    tensor_path: str
    position: tuple[float, float] | None = None  # planar meters, already projected


@dataclass
class DatasetManifest:
    """Ordered traverse description: entries appear in traverse-time order."""

    entries: list[ManifestEntry] = field(default_factory=list)
    gt_mode: str = "frame"
    layer_name: str = ""

    def __post_init__(self):
        if self.gt_mode not in GT_MODES:
            raise ManifestError(f"gt_mode must be one of {GT_MODES}, got {self.gt_mode!r}")
        seen = set()
        for entry in self.entries:
            if entry.id in seen:
                raise ManifestError(f"duplicate entry id {entry.id!r}")
            seen.add(entry.id)
        if self.gt_mode == "metric":
            missing = [e.id for e in self.entries if e.position is None]
            if missing:
                raise ManifestError(
                    f"metric gt_mode requires a position for every entry; "
                    f"missing for {missing[:5]}"
                )

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def positions(self) -> np.ndarray:
        if any(e.position is None for e in self.entries):
            raise ManifestError("manifest has entries without positions")
        return np.asarray([e.position for e in self.entries], dtype=np.float64)


def _parse_position(raw, entry_id: str):
    if raw is None:
        return None
    try:
        x, y = float(raw[0]), float(raw[1])
    except (TypeError, ValueError, IndexError):
        raise ManifestError(f"entry {entry_id!r}: position must be a pair of reals")
    if len(raw) != 2 or not (np.isfinite(x) and np.isfinite(y)):
        raise ManifestError(f"entry {entry_id!r}: position must be a finite (x, y) pair")
    return (x, y)


def load_manifest(path) -> DatasetManifest:
    """Load and validate a YAML manifest document."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ManifestError(f"{path}: unreadable manifest: {exc}") from exc
    if not isinstance(doc, dict) or "entries" not in doc:
        raise ManifestError(f"{path}: manifest must be a mapping with an 'entries' list")
    raw_entries = doc["entries"]
    if not isinstance(raw_entries, list) or not raw_entries:
        raise ManifestError(f"{path}: 'entries' must be a non-empty list")
    entries = []
    for raw in raw_entries:
        if not isinstance(raw, dict) or "id" not in raw or "tensor_path" not in raw:
            raise ManifestError(f"{path}: every entry needs 'id' and 'tensor_path'")
        entry_id = str(raw["id"])
        entries.append(
            ManifestEntry(
                id=entry_id,
                tensor_path=str(raw["tensor_path"]),
                position=_parse_position(raw.get("position"), entry_id),
            )
        )
    return DatasetManifest(
        entries=entries,
        gt_mode=str(doc.get("gt_mode", "frame")),
        layer_name=str(doc.get("layer_name", "")),
    )


def save_manifest(manifest: DatasetManifest, path) -> None:
    """Write a manifest document, preserving entry order."""
    doc = {
        "layer_name": manifest.layer_name,
        "gt_mode": manifest.gt_mode,
        "entries": [],
    }
    for entry in manifest.entries:
        raw = {"id": entry.id, "tensor_path": entry.tensor_path}
        if entry.position is not None:
            raw["position"] = [float(entry.position[0]), float(entry.position[1])]
        doc["entries"].append(raw)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def resolve_tensor_path(manifest_path, entry: ManifestEntry) -> Path:
    raw = Path(entry.tensor_path)
    if raw.is_absolute():
        return raw
    return Path(manifest_path).parent / raw


def load_traverse(manifest_path) -> tuple[DatasetManifest, list[FeatureTensor]]:
    """Load a manifest plus every tensor it references, in traverse order."""
    manifest = load_manifest(manifest_path)
    tensors = [read_tensor(resolve_tensor_path(manifest_path, e)) for e in manifest.entries]
    return manifest, tensors
