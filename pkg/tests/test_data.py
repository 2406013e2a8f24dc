"""Tests for datasets, MNIST parsing, partitions and triggers."""

import gzip
import struct

import numpy as np
import pytest

from vfl_shield.data import (
    Dataset,
    PartitionSpec,
    apply_trigger,
    blob_splits,
    distributed_triggers,
    feature_trigger,
    load_mnist,
    load_mnist_split,
    merge_views,
    mnist_trigger,
    parse_idx_images,
    parse_idx_labels,
    select_poison,
    select_targets,
    split_dataset,
    subsample,
    synth_blobs,
    vertical_split,
)
from vfl_shield.errors import ContractError, FormatError, ShapeError


def idx_images(images):
    """Encode a uint8 array [n, rows, cols] as IDX3 bytes."""
    n, rows, cols = images.shape
    header = struct.pack(">IIII", 0x803, n, rows, cols)
    return header + images.astype(np.uint8).tobytes()


def idx_labels(labels):
    """Encode a uint8 array [n] as IDX1 bytes."""
    header = struct.pack(">II", 0x801, len(labels))
    return header + np.asarray(labels, np.uint8).tobytes()


@pytest.fixture
def mnist_dir(tmp_path):
    """Tiny MNIST-layout directory: six 28x28 training images, gzipped labels."""
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(6, 28, 28), dtype=np.uint8)
    labels = np.array([0, 1, 2, 3, 4, 5], dtype=np.uint8)
    (tmp_path / "train-images-idx3-ubyte").write_bytes(idx_images(images))
    labels_path = tmp_path / "train-labels-idx1-ubyte.gz"
    labels_path.write_bytes(gzip.compress(idx_labels(labels)))
    return tmp_path, images, labels


class TestIdxParsing:
    """Tests for the IDX readers."""

    def test_parse_images_and_labels(self):
        """Test decoding of well-formed files."""
        images = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)

        np.testing.assert_array_equal(parse_idx_images(idx_images(images)), images)
        np.testing.assert_array_equal(parse_idx_labels(idx_labels([7, 9])), [7, 9])

    def test_bad_magic(self):
        """Test a label file is not accepted as images."""
        with pytest.raises(FormatError, match="magic"):
            parse_idx_images(idx_labels([1]) + b"\x00" * 8)

    def test_truncated_images_report_offset(self):
        """Test truncation names the byte offset where data ran out."""
        blob = idx_images(np.zeros((2, 2, 2), np.uint8))[:-3]
        with pytest.raises(FormatError) as exc_info:
            parse_idx_images(blob)
        assert exc_info.value.offset == len(blob)

    def test_truncated_header(self):
        """Test a header shorter than its fixed size."""
        with pytest.raises(FormatError, match="header"):
            parse_idx_labels(b"\x00\x00")

    def test_load_mnist_scales_pixels(self, mnist_dir):
        """Test loading from disk, gzip detection and scaling."""
        path, images, labels = mnist_dir
        ds = load_mnist(
            path / "train-images-idx3-ubyte", path / "train-labels-idx1-ubyte.gz"
        )

        assert ds.image_shape == (28, 28)
        assert ds.num_classes == 10
        np.testing.assert_allclose(ds.features, images.reshape(6, -1) / 255.0)
        np.testing.assert_array_equal(ds.labels, labels)

    def test_load_split_from_directory(self, mnist_dir):
        """Test file discovery for a split."""
        path, _, _ = mnist_dir
        assert load_mnist_split("train", path).num_samples == 6
        with pytest.raises(FileNotFoundError):
            load_mnist_split("test", path)

    def test_count_mismatch(self, tmp_path):
        """Test image and label counts must agree."""
        (tmp_path / "img").write_bytes(idx_images(np.zeros((2, 2, 2), np.uint8)))
        (tmp_path / "lab").write_bytes(idx_labels([1]))
        with pytest.raises(FormatError, match="2 images but 1 labels"):
            load_mnist(tmp_path / "img", tmp_path / "lab")


class TestDataset:
    """Tests for the Dataset value type."""

    def test_arrays_are_frozen_copies(self):
        """Test the dataset owns read-only copies of its arrays."""
        features = np.zeros((2, 3))
        ds = Dataset(features, [0, 1], 2)

        features[0, 0] = 5.0
        assert ds.features[0, 0] == 0.0
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0
        assert features.flags.writeable

    def test_validation(self):
        """Test shape, label range and finiteness checks."""
        with pytest.raises(ShapeError):
            Dataset(np.zeros((2, 3)), [0], 2)
        with pytest.raises(ContractError):
            Dataset(np.zeros((2, 3)), [0, 2], 2)
        with pytest.raises(ContractError):
            Dataset(np.full((1, 1), np.nan), [0], 2)

    def test_split_and_subsample(self):
        """Test disjoint seeded splits and subsamples."""
        ds = synth_blobs(2, 4, 10, 0.1, seed=0)
        train, test = split_dataset(ds, 0.25, seed=1)

        assert (train.num_samples, test.num_samples) == (15, 5)
        assert test.split == "test"
        assert subsample(ds, 7, seed=0).num_samples == 7
        assert subsample(ds, 100, seed=0) is ds


class TestSyntheticBlobs:
    """Tests for seeded blob data."""

    def test_seeded_and_scaled(self):
        """Test reproducibility and the [0, 1] range."""
        a = synth_blobs(3, 5, 8, 0.2, seed=4)
        b = synth_blobs(3, 5, 8, 0.2, seed=4)

        np.testing.assert_array_equal(a.features, b.features)
        assert a.features.min() == 0.0 and a.features.max() == 1.0
        assert np.bincount(a.labels).tolist() == [8, 8, 8]

    def test_zero_spread_collapses_classes(self):
        """Test spread 0 gives identical samples within a class."""
        ds = synth_blobs(2, 3, 4, 0.0, seed=1)
        for label in range(2):
            rows = ds.features[ds.labels == label]
            np.testing.assert_array_equal(rows, np.repeat(rows[:1], 4, axis=0))

    def test_blob_splits(self):
        """Test train and test come from the same centers."""
        train, test = blob_splits(3, 6, 10, 0.1, seed=0)
        assert train.num_samples + test.num_samples == 30

    def test_invalid_arguments(self):
        """Test class and feature count validation."""
        with pytest.raises(ContractError):
            synth_blobs(1, 3, 4, 0.1, seed=0)
        with pytest.raises(ContractError):
            synth_blobs(4, 3, 4, 0.1, seed=0)


class TestPartition:
    """Tests for vertical partitions."""

    def test_even_gives_active_party_first_block(self):
        """Test block order: passive parties left to right, active first block."""
        spec = PartitionSpec.even(10, 3)

        assert spec.widths == [4, 3, 3]
        assert spec.columns[2].tolist() == [0, 1, 2]
        assert spec.owner(9) == 1

    def test_image_columns(self):
        """Test the lower-right pixel belongs to the last passive party."""
        spec = PartitionSpec.image_columns(28, 28, 2)

        assert spec.widths == [392, 392]
        assert spec.owner(27 * 28 + 27) == 0
        assert spec.owner(0) == 1

    def test_four_party_strips(self):
        """Test the split trigger pixels land in the three passive strips."""
        spec = PartitionSpec.image_columns(28, 28, 4)
        owners = [spec.owner(27 * 28 + c) for c in (13, 20, 27)]
        assert owners == [0, 1, 2]

    def test_split_and_merge_round_trip(self):
        """Test merge_views inverts vertical_split."""
        ds = synth_blobs(2, 5, 3, 0.1, seed=0)
        spec = PartitionSpec.even(5, 2)

        merged = merge_views(vertical_split(ds, spec), spec)
        np.testing.assert_array_equal(merged, ds.features)

    def test_overlap_and_gaps_rejected(self):
        """Test partitions must be disjoint and covering."""
        with pytest.raises(ContractError, match="overlap"):
            PartitionSpec((np.array([0, 1]), np.array([1, 2])), 3)
        with pytest.raises(ContractError, match="unassigned"):
            PartitionSpec((np.array([0]), np.array([2])), 3)

    def test_too_many_parties(self):
        """Test each party needs at least one feature."""
        with pytest.raises(ContractError):
            PartitionSpec.even(2, 3)


class TestTriggers:
    """Tests for trigger stamping and sample selection."""

    @pytest.fixture
    def images(self):
        """Ten blank 28x28 images over two classes."""
        return Dataset(np.zeros((10, 784)), [0, 1] * 5, 2, image_shape=(28, 28))

    def test_mnist_trigger_stamped_and_marked(self, images):
        """Test the four trigger pixels are set to 1 and samples marked."""
        spec = PartitionSpec.image_columns(28, 28, 2)
        out = apply_trigger(images, mnist_trigger(owner=0), [1, 3], spec)

        idx = [25 * 28 + 27, 27 * 28 + 25, 26 * 28 + 26, 27 * 28 + 27]
        np.testing.assert_array_equal(out.features[np.ix_([1, 3], idx)], 1.0)
        assert out.features[[0, 2]].sum() == 0.0
        assert out.triggered_ids().tolist() == [1, 3]
        assert images.triggered_ids().size == 0

    def test_trigger_is_idempotent(self, images):
        """Test stamping twice changes nothing."""
        once = apply_trigger(images, mnist_trigger(), [2])
        twice = apply_trigger(once, mnist_trigger(), [2])
        np.testing.assert_array_equal(once.features, twice.features)

    def test_owner_must_hold_positions(self, images):
        """Test a trigger outside its owner's slice is refused."""
        spec = PartitionSpec.image_columns(28, 28, 2)
        with pytest.raises(ContractError, match="slice"):
            apply_trigger(images, mnist_trigger(owner=1), [0], spec)

    def test_distributed_pieces(self, images):
        """Test the three single-pixel pieces, one per passive party."""
        spec = PartitionSpec.image_columns(28, 28, 4)
        pieces = distributed_triggers([0, 1, 2])
        out = images
        for piece in pieces:
            out = apply_trigger(out, piece, [4], spec)

        assert out.features[4].sum() == 3.0
        with pytest.raises(ContractError):
            distributed_triggers([0, 1])

    def test_feature_trigger(self):
        """Test tabular triggers set the last feature."""
        ds = synth_blobs(2, 4, 3, 0.1, seed=0)
        out = apply_trigger(ds, feature_trigger(4, value=1.0), [0])
        assert out.features[0, 3] == 1.0

    def test_pixel_trigger_needs_images(self):
        """Test pixel triggers on tabular data."""
        with pytest.raises(ContractError):
            apply_trigger(synth_blobs(2, 4, 3, 0.1, seed=0), mnist_trigger(), [0])

    def test_select_targets(self, images):
        """Test targets are clean samples of the target class."""
        targets = select_targets(images, 1, 3, seed=0)

        assert len(set(targets.tolist())) == 3
        assert np.all(images.labels[targets] == 1)
        with pytest.raises(ContractError):
            select_targets(images, 1, 6, seed=0)

    def test_select_poison_exclusions(self, images):
        """Test poison ids skip the target label and excluded ids."""
        poison = select_poison(images, 3, seed=0, exclude_label=1, exclude_ids=[0])

        assert np.all(images.labels[poison] == 0)
        assert 0 not in poison.tolist()
        with pytest.raises(ContractError):
            select_poison(images, 5, seed=0, exclude_label=1, exclude_ids=[0])
