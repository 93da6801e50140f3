"""Binary tensor format and manifest loading."""

import struct

import numpy as np
import pytest
import yaml
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from vprfilter import (
    BadMagicError,
    DatasetManifest,
    FeatureTensor,
    ManifestEntry,
    ManifestError,
    TensorFormatError,
    TruncatedPayloadError,
    VersionMismatchError,
    load_manifest,
    load_traverse,
    read_tensor,
    save_manifest,
    write_tensor,
)
from vprfilter.tensor_io import HEADER_SIZE, MAGIC, resolve_tensor_path


def _roundtrip(tmp_path, data):
    path = tmp_path / "t.fmap"
    write_tensor(FeatureTensor(data), path)
    return read_tensor(path)


class TestTensorFormat:
    def test_roundtrip_preserves_values_and_shape(self, tmp_path, rng):
        data = rng.standard_normal((3, 5, 7)).astype(np.float32)
        back = _roundtrip(tmp_path, data)
        assert back.data.shape == (3, 5, 7)
        assert np.array_equal(back.data, data)

    def test_single_cell_file_is_21_bytes(self, tmp_path):
        path = tmp_path / "one.fmap"
        write_tensor(FeatureTensor(np.ones((1, 1, 1), dtype=np.float32)), path)
        assert path.stat().st_size == 21

    def test_header_layout(self, tmp_path):
        path = tmp_path / "t.fmap"
        write_tensor(FeatureTensor(np.zeros((2, 3, 4), dtype=np.float32)), path)
        buf = path.read_bytes()
        assert buf[:4] == MAGIC
        assert buf[4] == 1  # version byte
        width, height, channels = struct.unpack_from("<III", buf, 5)
        assert (width, height, channels) == (3, 2, 4)
        assert len(buf) == HEADER_SIZE + 4 * 2 * 3 * 4

    def test_payload_is_row_major_hwc(self, tmp_path):
        data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
        path = tmp_path / "t.fmap"
        write_tensor(FeatureTensor(data), path)
        payload = np.frombuffer(path.read_bytes()[HEADER_SIZE:], dtype="<f4")
        assert np.array_equal(payload, np.arange(24, dtype=np.float32))

    def test_conv_scale_shape(self, tmp_path, rng):
        data = rng.standard_normal((13, 13, 384)).astype(np.float32)
        back = _roundtrip(tmp_path, data)
        assert back.height == 13 and back.width == 13 and back.channels == 384
        assert np.array_equal(back.data, data)

    # each example rewrites its file from scratch, sharing tmp_path is fine
    @settings(
        max_examples=30,
        deadline=None,
        suppress_health_check=[HealthCheck.function_scoped_fixture],
    )
    @given(
        h=st.integers(1, 4),
        w=st.integers(1, 4),
        c=st.integers(1, 6),
        seed=st.integers(0, 2**31),
    )
    def test_roundtrip_property(self, tmp_path, h, w, c, seed):
        data = (
            np.random.default_rng(seed).standard_normal((h, w, c)).astype(np.float32)
        )
        back = _roundtrip(tmp_path, data)
        assert np.array_equal(back.data, data)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.fmap"
        path.write_bytes(b"JUNK" + bytes(17))
        with pytest.raises(BadMagicError):
            read_tensor(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "v2.fmap"
        good = MAGIC + struct.pack("<B", 2) + struct.pack("<III", 1, 1, 1) + bytes(4)
        path.write_bytes(good)
        with pytest.raises(VersionMismatchError):
            read_tensor(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.fmap"
        path.write_bytes(MAGIC + b"\x01\x00")
        with pytest.raises(TruncatedPayloadError):
            read_tensor(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "cut.fmap"
        write_tensor(FeatureTensor(np.ones((2, 2, 2), dtype=np.float32)), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(TruncatedPayloadError):
            read_tensor(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "fat.fmap"
        write_tensor(FeatureTensor(np.ones((1, 1, 1), dtype=np.float32)), path)
        path.write_bytes(path.read_bytes() + bytes(4))
        with pytest.raises(TensorFormatError):
            read_tensor(path)

    def test_errors_share_a_base_class(self):
        for err in (BadMagicError, VersionMismatchError, TruncatedPayloadError):
            assert issubclass(err, TensorFormatError)
        assert issubclass(TensorFormatError, ValueError)

    def test_rejects_non_finite(self):
        bad = np.ones((1, 1, 2), dtype=np.float32)
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            FeatureTensor(bad)

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError):
            FeatureTensor(np.ones((2, 2), dtype=np.float32))

    def test_rejects_empty_dimension(self):
        with pytest.raises(ValueError):
            FeatureTensor(np.ones((0, 2, 2), dtype=np.float32))


class TestManifest:
    def _manifest(self, n=3, with_positions=True):
        entries = [
            ManifestEntry(
                id=f"img_{i:03d}",
                tensor_path=f"tensors/img_{i:03d}.fmap",
                position=(float(i), 0.0) if with_positions else None,
            )
            for i in range(n)
        ]
        return DatasetManifest(entries=entries, gt_mode="frame", layer_name="conv3")

    def test_roundtrip(self, tmp_path):
        manifest = self._manifest()
        path = tmp_path / "manifest.yaml"
        save_manifest(manifest, path)
        back = load_manifest(path)
        assert back.ids() == manifest.ids()
        assert back.layer_name == "conv3"
        assert back.gt_mode == "frame"
        assert np.array_equal(back.positions(), manifest.positions())

    def test_entry_order_preserved(self, tmp_path):
        entries = [
            ManifestEntry(id=f"z_{i}", tensor_path=f"{i}.fmap") for i in (5, 1, 9, 2)
        ]
        path = tmp_path / "m.yaml"
        save_manifest(DatasetManifest(entries=entries), path)
        assert load_manifest(path).ids() == ["z_5", "z_1", "z_9", "z_2"]

    def test_duplicate_id_rejected(self):
        entries = [
            ManifestEntry(id="a", tensor_path="1.fmap"),
            ManifestEntry(id="a", tensor_path="2.fmap"),
        ]
        with pytest.raises(ManifestError):
            DatasetManifest(entries=entries)

    def test_metric_mode_requires_positions(self):
        entries = [ManifestEntry(id="a", tensor_path="1.fmap")]
        with pytest.raises(ManifestError):
            DatasetManifest(entries=entries, gt_mode="metric")

    def test_unknown_gt_mode_rejected(self):
        with pytest.raises(ManifestError):
            DatasetManifest(entries=[], gt_mode="gps")

    def test_malformed_position_rejected(self, tmp_path):
        doc = {"entries": [{"id": "a", "tensor_path": "1.fmap", "position": [1.0]}]}
        path = tmp_path / "m.yaml"
        path.write_text(yaml.safe_dump(doc))
        with pytest.raises(ManifestError):
            load_manifest(path)

    def test_missing_entries_key_rejected(self, tmp_path):
        path = tmp_path / "m.yaml"
        path.write_text(yaml.safe_dump({"layer_name": "x"}))
        with pytest.raises(ManifestError):
            load_manifest(path)

    def test_entry_missing_tensor_path_rejected(self, tmp_path):
        path = tmp_path / "m.yaml"
        path.write_text(yaml.safe_dump({"entries": [{"id": "a"}]}))
        with pytest.raises(ManifestError):
            load_manifest(path)

    def test_unparseable_yaml_rejected(self, tmp_path):
        path = tmp_path / "m.yaml"
        path.write_text("entries: [unclosed")
        with pytest.raises(ManifestError):
            load_manifest(path)

    def test_large_manifest_roundtrip(self, tmp_path):
        manifest = self._manifest(n=1000)
        path = tmp_path / "big.yaml"
        save_manifest(manifest, path)
        back = load_manifest(path)
        assert len(back.entries) == 1000
        assert back.ids()[-1] == "img_999"

    def test_relative_paths_resolve_against_manifest_dir(self, tmp_path):
        sub = tmp_path / "data"
        sub.mkdir()
        entry = ManifestEntry(id="a", tensor_path="tensors/a.fmap")
        resolved = resolve_tensor_path(sub / "manifest.yaml", entry)
        assert resolved == sub / "tensors" / "a.fmap"

    def test_absolute_paths_pass_through(self, tmp_path):
        entry = ManifestEntry(id="a", tensor_path=str(tmp_path / "a.fmap"))
        resolved = resolve_tensor_path(tmp_path / "m.yaml", entry)
        assert resolved == tmp_path / "a.fmap"

    def test_load_traverse(self, tmp_path, rng):
        tensor_dir = tmp_path / "tensors"
        tensor_dir.mkdir()
        entries = []
        originals = []
        for i in range(4):
            data = rng.standard_normal((2, 2, 3)).astype(np.float32)
            originals.append(data)
            write_tensor(FeatureTensor(data), tensor_dir / f"{i}.fmap")
            entries.append(ManifestEntry(id=f"i{i}", tensor_path=f"tensors/{i}.fmap"))
        save_manifest(DatasetManifest(entries=entries), tmp_path / "m.yaml")
        manifest, tensors = load_traverse(tmp_path / "m.yaml")
        assert manifest.ids() == [f"i{i}" for i in range(4)]
        for tensor, data in zip(tensors, originals):
            assert np.array_equal(tensor.data, data)

    def test_load_traverse_missing_tensor(self, tmp_path):
        entries = [ManifestEntry(id="a", tensor_path="gone.fmap")]
        save_manifest(DatasetManifest(entries=entries), tmp_path / "m.yaml")
        with pytest.raises(FileNotFoundError):
            load_traverse(tmp_path / "m.yaml")
