"""Datasets: normalization, synthetic sets, IDX parsing and batching."""

import struct

import numpy as np
import pytest

from zico_nas.datasets import (
    DEFAULT_DATA,
    Dataset,
    batch_iter,
    l2_normalize,
    load_data_spec,
    load_idx,
    parse_data_spec,
    parse_idx_images,
    parse_idx_labels,
    sample_subset,
    standardize,
    synth_clusters,
    synth_gratings,
    write_idx,
)
from zico_nas.engine import Network, ParamSet, kaiming_init, linear_layer, ops
from zico_nas.errors import ConsistencyError, FormatError, LengthError, ValidationError
from zico_nas.harness.training import TrainConfig, evaluate, train_network


def dataset(rows, labels=None):
    rows = np.asarray(rows, dtype=np.float64)
    labels = np.zeros(len(rows)) if labels is None else np.asarray(labels)
    return Dataset(rows, labels)


class TestNormalize:
    def test_hand_row(self):
        ds = l2_normalize(dataset([[3.0, 4.0]]))
        np.testing.assert_allclose(ds.samples, [[0.6, 0.8]], rtol=1e-15)
        assert ds.normalized

    def test_unit_vector_unchanged(self):
        ds = l2_normalize(dataset([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_array_equal(ds.samples, [[0.0, 1.0], [1.0, 0.0]])

    def test_zero_row_named(self):
        with pytest.raises(ValidationError, match="row 1"):
            l2_normalize(dataset([[1.0, 0.0], [0.0, 0.0]]))

    def test_idempotent(self):
        ds = l2_normalize(dataset(np.random.default_rng(0).normal(size=(20, 5))))
        assert l2_normalize(ds).samples.tobytes() == ds.samples.tobytes()

    def test_standardize_uses_given_stats(self):
        a = dataset(np.random.default_rng(0).normal(3.0, 2.0, size=(50, 3)))
        sa, stats = standardize(a)
        np.testing.assert_allclose(sa.samples.mean(axis=0), 0.0, atol=1e-12)
        sb, _ = standardize(a, stats)
        assert sb.samples.tobytes() == sa.samples.tobytes()

    def test_immutable(self):
        ds = dataset([[1.0, 2.0]])
        with pytest.raises(ValueError):
            ds.samples[0, 0] = 5.0


class TestSynthetic:
    def test_zero_spread_two_points(self):
        ds = synth_clusters(2, 5, 3, 0.0, seed=1)
        assert len(np.unique(ds.samples, axis=0)) == 2
        for c in (0, 1):
            assert len(np.unique(ds.samples[ds.labels == c], axis=0)) == 1

    def test_deterministic(self):
        a, b = synth_clusters(3, 4, 5, 0.3, 9), synth_clusters(3, 4, 5, 0.3, 9)
        assert a.samples.tobytes() == b.samples.tobytes()
        g1, g2 = synth_gratings(10, 3, 8, 1.0, 2), synth_gratings(10, 3, 8, 1.0, 2)
        assert g1.samples.tobytes() == g2.samples.tobytes()

    def test_bad_arguments(self):
        with pytest.raises(ValidationError):
            synth_clusters(1, 5, 3, 0.1, 0)
        with pytest.raises(ValidationError):
            synth_gratings(10, 0, 8, 1.0, 0)

    def test_gratings_shape_and_labels(self):
        ds = synth_gratings(10, 4, 8, 0.5, 0)
        assert ds.image_shape == (1, 8, 8) and ds.samples.shape == (40, 64)
        np.testing.assert_array_equal(ds.labels[:10], np.arange(10))

    def test_mlp_oracle_fits_clusters(self):
        """A two-layer MLP trained 3 epochs separates 10 clusters in 64-d."""
        ds = synth_clusters(10, 400, 64, 0.1, seed=0, image_shape=(1, 8, 8))
        hidden, head = linear_layer(1, 64, 32), linear_layer(2, 32, 10)
        params = ParamSet([hidden, head])
        kaiming_init(params, 0)
        net = Network(params, lambda x: head(ops.relu(hidden(ops.flatten(x)))))
        diverged, _ = train_network(net, ds, TrainConfig(epochs=3, batch_size=64, lr=0.05), seed=0)
        assert not diverged
        assert evaluate(net, ds) > 0.8

    def test_sample_subset_uniform_without_replacement(self):
        ds = dataset(np.arange(20.0).reshape(10, 2), np.arange(10))
        sub = sample_subset(ds, 6, seed=3)
        assert len(set(sub.labels.tolist())) == 6
        with pytest.raises(ValidationError):
            sample_subset(ds, 11, seed=0)


def idx_image_bytes():
    return bytes([0, 0, 8, 3]) + struct.pack(">3I", 1, 2, 2) + bytes([0, 255, 0, 255])


class TestIdx:
    def test_hand_built_file(self, tmp_path):
        (tmp_path / "img").write_bytes(idx_image_bytes())
        (tmp_path / "lab").write_bytes(bytes([0, 0, 8, 1]) + struct.pack(">I", 1) + bytes([0]))
        ds = load_idx(tmp_path / "img", tmp_path / "lab")
        np.testing.assert_array_equal(ds.samples, [[0.0, 1.0, 0.0, 1.0]])
        assert ds.image_shape == (1, 2, 2)

    def test_label_magic_in_label_file(self):
        with pytest.raises(FormatError, match="0x00000801"):
            parse_idx_labels(idx_image_bytes())

    def test_empty_file(self):
        with pytest.raises(LengthError):
            parse_idx_images(b"")

    def test_truncated_payload(self):
        with pytest.raises(LengthError):
            parse_idx_images(idx_image_bytes()[:-1])

    def test_trailing_bytes(self):
        with pytest.raises(LengthError):
            parse_idx_images(idx_image_bytes() + b"\x00")

    def test_count_mismatch(self, tmp_path):
        (tmp_path / "img").write_bytes(idx_image_bytes())
        (tmp_path / "lab").write_bytes(write_idx(np.array([0, 1], dtype=np.uint8)))
        with pytest.raises(ConsistencyError):
            load_idx(tmp_path / "img", tmp_path / "lab")

    def test_round_trip(self):
        raw = idx_image_bytes()
        assert write_idx(parse_idx_images(raw)) == raw


class TestBatching:
    def test_partition_even(self):
        ds = dataset(np.arange(8.0).reshape(4, 2), np.arange(4))
        batches = list(batch_iter(ds, 2, seed=0))
        assert [len(b.labels) for b in batches] == [2, 2]
        assert sorted(np.concatenate([b.labels for b in batches]).tolist()) == [0, 1, 2, 3]

    def test_remainder(self):
        ds = dataset(np.arange(10.0).reshape(5, 2), np.arange(5))
        assert [len(b.labels) for b in batch_iter(ds, 2, seed=0)] == [2, 2, 1]

    def test_seeded_order(self):
        ds = dataset(np.arange(20.0).reshape(10, 2), np.arange(10))
        a = [b.labels.tolist() for b in batch_iter(ds, 3, seed=5)]
        b = [b.labels.tolist() for b in batch_iter(ds, 3, seed=5)]
        assert a == b

    def test_zero_batch_size(self):
        with pytest.raises(ValidationError):
            next(batch_iter(dataset([[1.0]]), 0, seed=0))


class TestDataSpecs:
    def test_parse(self):
        assert parse_data_spec("gratings:noise=0.5,side=6") == ("gratings", {"noise": 0.5, "side": 6})
        assert parse_data_spec("idx:a,b") == ("idx", {"images": "a", "labels": "b"})

    @pytest.mark.parametrize("text", ["blobs:", "gratings:noise", "gratings:bogus=1", "gratings:side=x", "idx:a"])
    def test_bad_specs(self, text):
        with pytest.raises(ValidationError):
            parse_data_spec(text)

    def test_default_split(self):
        train, test = load_data_spec(DEFAULT_DATA)
        assert train.M == 2400 and test.M == 600
        np.testing.assert_allclose(train.samples.mean(axis=0), 0.0, atol=1e-12)

    def test_clusters_get_image_shape(self):
        train, _ = load_data_spec("clusters:per_class=10,d=16")
        assert train.image_shape == (1, 4, 4)
