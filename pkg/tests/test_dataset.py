"""Tests for dataset construction, CSV ingestion, standardization and splitting."""

import itertools

import numpy as np
import pytest

from hardness_bench.data.dataset import (
    Dataset,
    SplitSpec,
    blob_centers,
    generate_blobs,
    generate_patterns,
    load_csv,
    save_csv,
    split,
    split_indices,
    standardize,
)
from hardness_bench.data.enums import BlobLayout
from hardness_bench.exceptions import DatasetError


class TestDatasetInvariants:
    """Construction-time validation."""

    def test_rejects_out_of_range_labels(self):
        with pytest.raises(DatasetError, match="labels must lie"):
            Dataset(np.zeros((3, 2)), np.array([0, 1, 2]), k=2)

    def test_rejects_non_finite_features(self):
        features = np.zeros((3, 2))
        features[1, 1] = np.nan
        with pytest.raises(DatasetError, match="row 1, column 1"):
            Dataset(features, np.array([0, 1, 0]), k=2)

    def test_rejects_grid_shape_mismatch(self):
        with pytest.raises(DatasetError, match="grid shape"):
            Dataset(np.zeros((2, 6)), np.array([0, 1]), k=2, grid_shape=(2, 2))

    def test_arrays_are_read_only(self):
        ds = Dataset(np.zeros((2, 2)), np.array([0, 1]), k=2)
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0

    def test_require_all_classes(self):
        ds = Dataset(np.zeros((2, 1)), np.array([0, 0]), k=2)
        with pytest.raises(DatasetError, match=r"\[1\]"):
            ds.require_all_classes()


class TestGenerateBlobs:
    """Balanced isotropic Gaussian clusters."""

    def test_small_balanced_with_separated_centers(self):
        """n=4, k=2 gives two samples per class and centres at least sep apart."""
        ds = generate_blobs(4, 2, 2, 10.0, seed=0)
        assert ds.class_counts.tolist() == [2, 2]
        centers = blob_centers(2, 2, 10.0)
        assert np.linalg.norm(centers[0] - centers[1]) >= 10.0 - 1e-12

    @pytest.mark.parametrize("k", [3, 4, 7])
    def test_polygon_centers_pairwise_separated(self, k):
        centers = blob_centers(3, k, 8.0)
        for a, b in itertools.combinations(range(k), 2):
            assert np.linalg.norm(centers[a] - centers[b]) >= 8.0 - 1e-9

    def test_line_layout_spacing(self):
        centers = blob_centers(2, 3, 8.0, BlobLayout.LINE)
        assert centers[:, 0].tolist() == [-8.0, 0.0, 8.0]
        assert np.all(centers[:, 1] == 0)

    def test_sizes_differ_by_at_most_one(self):
        ds = generate_blobs(103, 3, 4, 5.0, seed=1)
        counts = ds.class_counts
        assert counts.sum() == 103
        assert counts.max() - counts.min() <= 1

    def test_deterministic(self):
        a = generate_blobs(50, 3, 3, 6.0, seed=11)
        b = generate_blobs(50, 3, 3, 6.0, seed=11)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_seed_changes_draw(self):
        a = generate_blobs(50, 3, 3, 6.0, seed=11)
        b = generate_blobs(50, 3, 3, 6.0, seed=12)
        assert not np.array_equal(a.features, b.features)

    @pytest.mark.parametrize(
        ("n", "d", "k", "sep"),
        [(2, 2, 3, 1.0), (10, 0, 2, 1.0), (10, 2, 2, float("inf")), (10, 2, 1, 1.0)],
    )
    def test_rejects_invalid_arguments(self, n, d, k, sep):
        with pytest.raises(DatasetError):
            generate_blobs(n, d, k, sep, seed=0)


class TestGeneratePatterns:
    """Raster datasets for grid-only perturbations."""

    def test_grid_shape_and_balance(self):
        ds = generate_patterns(40, 4, 8, 0.1, seed=3)
        assert ds.grid_shape == (8, 8)
        assert ds.d == 64
        assert ds.class_counts.tolist() == [10, 10, 10, 10]

    def test_noise_free_rasters_are_class_prototypes(self):
        ds = generate_patterns(8, 2, 6, 0.0, seed=0)
        for c in range(2):
            rows = ds.features[ds.labels == c]
            assert np.allclose(rows, rows[0])

    def test_rejects_small_side(self):
        with pytest.raises(DatasetError, match="side"):
            generate_patterns(10, 2, 3, 0.1, seed=0)


class TestLoadCsv:
    """CSV ingestion."""

    def test_first_appearance_relabeling(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("f1,f2,target\n1.0,2.0,a\n3.0,4.0,b\n5.0,6.0,a\n", encoding="utf-8")
        ds = load_csv(path, "target")
        assert ds.labels.tolist() == [0, 1, 0]
        assert ds.k == 2
        assert ds.features.tolist() == [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]
        assert ds.feature_names == ("f1", "f2")

    def test_target_column_may_be_anywhere(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("y,x\n2,0.5\n1,0.25\n", encoding="utf-8")
        ds = load_csv(path, "y")
        assert ds.labels.tolist() == [0, 1]
        assert ds.features[:, 0].tolist() == [0.5, 0.25]

    def test_nan_cell_names_row_and_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f1,f2,target\n1.0,2.0,a\n3.0,,b\n", encoding="utf-8")
        with pytest.raises(DatasetError, match=r"row 2, column 'f2'"):
            load_csv(path, "target")

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f1,target\nabc,a\n1.0,b\n", encoding="utf-8")
        with pytest.raises(DatasetError, match=r"'abc' at row 1, column 'f1'"):
            load_csv(path, "target")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            load_csv(tmp_path / "absent.csv", "target")

    def test_missing_column(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("f1,target\n1.0,a\n2.0,b\n", encoding="utf-8")
        with pytest.raises(DatasetError, match="'label'"):
            load_csv(path, "label")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(DatasetError, match="empty"):
            load_csv(path, "target")

    def test_round_trip_is_exact(self, tmp_path):
        ds = generate_blobs(60, 3, 3, 4.0, seed=5)
        loaded = load_csv(save_csv(ds, tmp_path / "blobs.csv"), "label")
        assert np.array_equal(loaded.features, ds.features)
        # integer targets relabel by first appearance, so compare the partition
        mapping = {}
        for original, new in zip(ds.labels, loaded.labels, strict=True):
            assert mapping.setdefault(int(original), int(new)) == int(new)
        assert len(mapping) == 3


class TestStandardize:
    """Population-std standardization."""

    def test_hand_column(self):
        ds = Dataset(np.array([[1.0], [2.0], [3.0]]), np.array([0, 1, 0]), k=2)
        out = standardize(ds).features[:, 0]
        assert out == pytest.approx([-1.224744871391589, 0.0, 1.224744871391589], abs=1e-12)

    def test_constant_column_becomes_zero(self):
        ds = Dataset(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]), np.array([0, 1, 0]), k=2)
        assert standardize(ds).features[:, 0].tolist() == [0.0, 0.0, 0.0]

    def test_moments(self):
        ds = standardize(generate_blobs(200, 4, 3, 5.0, seed=2))
        assert np.abs(ds.features.mean(axis=0)).max() < 1e-9
        assert np.abs(ds.features.std(axis=0) - 1.0).max() < 1e-9

    def test_idempotent(self):
        once = standardize(generate_blobs(200, 4, 3, 5.0, seed=2))
        twice = standardize(once)
        assert np.abs(once.features - twice.features).max() < 1e-9


class TestSplit:
    """Stratified seeded split."""

    def test_full_fraction_keeps_everything(self, blobs):
        train, test = split(blobs, SplitSpec(1.0, seed=3))
        assert test.n == 0
        assert np.array_equal(train.features, blobs.features)
        assert np.array_equal(train.labels, blobs.labels)

    def test_stratified_counts(self):
        ds = generate_blobs(100, 2, 2, 4.0, seed=0)
        train, test = split(ds, SplitSpec(0.8, seed=9))
        assert train.class_counts.tolist() == [40, 40]
        assert test.class_counts.tolist() == [10, 10]

    def test_partition_is_disjoint_and_exhaustive(self, blobs):
        train, test = split_indices(blobs.labels, blobs.k, SplitSpec(0.7, seed=4))
        assert np.intersect1d(train, test).size == 0
        assert np.array_equal(np.sort(np.concatenate([train, test])), np.arange(blobs.n))

    def test_deterministic(self, blobs):
        first = split_indices(blobs.labels, blobs.k, SplitSpec(0.5, seed=4))
        second = split_indices(blobs.labels, blobs.k, SplitSpec(0.5, seed=4))
        assert all(np.array_equal(a, b) for a, b in zip(first, second, strict=True))

    def test_empty_train_rejected(self):
        ds = Dataset(np.zeros((2, 1)), np.array([0, 1]), k=2)
        with pytest.raises(DatasetError, match="empty"):
            split(ds, SplitSpec(0.1, seed=0))

    def test_invalid_fraction(self):
        with pytest.raises(DatasetError):
            SplitSpec(0.0)
