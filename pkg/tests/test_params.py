"""Tests for ParameterStore bookkeeping and the checkpoint format."""

import numpy as np
import pytest

from virl.autodiff import ParameterStore
from virl.errors import CheckpointError, ShapeMismatchError, VirlError


@pytest.fixture
def store() -> ParameterStore:
    s = ParameterStore()
    s.add("metric.conv1.w", np.arange(24, dtype=np.float32).reshape(2, 3, 2, 2) / 7.0)
    s.add("metric.conv1.b", np.array([0.5, -0.25]))
    s.add("policy.out.b", np.array([1e-7, 3.0, -2.0]))
    return s


class TestParameterStore:
    def test_duplicate_name_rejected(self, store):
        with pytest.raises(VirlError, match="duplicate"):
            store.add("metric.conv1.b", np.zeros(2))

    def test_set_value_keeps_shape(self, store):
        with pytest.raises(ShapeMismatchError):
            store.set_value("metric.conv1.b", np.zeros(3))

    def test_select_by_prefix(self, store):
        metric = store.select("metric.")
        assert metric.names() == ["metric.conv1.w", "metric.conv1.b"]

    def test_union_preserves_order(self, store):
        merged = ParameterStore.union(store.select("policy."), store.select("metric."))
        assert merged.names() == ["policy.out.b", "metric.conv1.w", "metric.conv1.b"]

    def test_copy_is_independent(self, store):
        clone = store.copy()
        clone.set_value("policy.out.b", np.zeros(3))
        assert store.value("policy.out.b")[1] == pytest.approx(3.0)

    def test_load_values_requires_every_name(self, store):
        with pytest.raises(CheckpointError):
            store.load_values(store.select("metric."))


class TestCheckpointFormat:
    """Save, load, save must reproduce the file byte for byte."""

    def test_round_trip_is_byte_identical(self, store, tmp_path):
        path = tmp_path / "a.ckpt"
        store.save(path, config_hash="abc123")
        loaded, header = ParameterStore.load(path)
        loaded.save(tmp_path / "b.ckpt", config_hash=header.config_hash)
        assert path.read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_header_fields(self, store):
        _, header = ParameterStore.from_bytes(store.to_bytes("feedface"))
        assert header.config_hash == "feedface"
        assert header.names == store.names()
        assert header.shapes == [[2, 3, 2, 2], [2], [3]]
        assert header.arch_hash == store.arch_hash()

    def test_missing_config_hash_reads_back_empty(self, store):
        _, header = ParameterStore.from_bytes(store.to_bytes())
        assert header.config_hash == ""

    def test_values_survive(self, store):
        loaded, _ = ParameterStore.from_bytes(store.to_bytes())
        for name in store:
            np.testing.assert_array_equal(loaded.value(name), store.value(name))

    def test_truncated_file(self, store):
        with pytest.raises(CheckpointError, match="truncated"):
            ParameterStore.from_bytes(store.to_bytes()[:-4])

    def test_trailing_bytes(self, store):
        with pytest.raises(CheckpointError, match="trailing"):
            ParameterStore.from_bytes(store.to_bytes() + b"\x00\x00\x00\x00")

    def test_wrong_magic(self):
        with pytest.raises(CheckpointError):
            ParameterStore.from_bytes(b"PK\x03\x04 not a checkpoint")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="cannot read"):
            ParameterStore.load(tmp_path / "nope.ckpt")

    def test_arch_hash_depends_on_shapes(self):
        a = ParameterStore()
        a.add("w", np.zeros((2, 3)))
        b = ParameterStore()
        b.add("w", np.zeros((3, 2)))
        assert a.arch_hash() != b.arch_hash()
