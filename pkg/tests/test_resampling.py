import numpy as np
import pytest

from oracles import knn_bruteforce, tomek_links_bruteforce
from vafusion.errors import ConfigError, DegenerateDataError
from vafusion.resampling import (
    PROV_ORIGINAL,
    PROV_SYNTHETIC,
    LabeledDataset,
    ResampleConfig,
    find_tomek_links,
    knn_indices,
    smote_oversample,
    smote_tomek_resample,
    synthesize_point,
    write_dataset_csv,
)


def dataset(features, labels):
    return LabeledDataset(features=np.asarray(features, dtype=float), labels=labels)


class TestKnn:
    def test_points_on_a_line(self):
        pts = np.array([[0.0], [1.0], [3.0], [10.0]])
        assert knn_indices(pts, 0, 2).tolist() == [1, 2]

    def test_tie_breaks_to_lower_index(self):
        pts = np.array([[-1.0], [1.0], [0.0]])
        assert knn_indices(pts, 2, 1).tolist() == [0]

    def test_k_too_large(self):
        with pytest.raises(ConfigError):
            knn_indices(np.zeros((3, 2)), 0, 3)

    def test_restriction(self):
        pts = np.array([[0.0], [0.1], [0.2], [5.0]])
        assert knn_indices(pts, 0, 1, restrict_to=[0, 3]).tolist() == [3]

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(30, 5))
        for q in (0, 7, 29):
            assert knn_indices(pts, q, 4).tolist() == knn_bruteforce(pts, q, 4)


class TestSmote:
    def test_midpoint_formula(self):
        np.testing.assert_allclose(
            synthesize_point(np.array([0.0, 0.0]), np.array([2.0, 2.0]), 0.5), [1.0, 1.0]
        )

    def test_exact_balance_count(self):
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal(size=(5, 3)), rng.normal(loc=4, size=(50, 3))])
        y = np.array([1] * 5 + [0] * 50)
        out = smote_oversample(dataset(X, y), ResampleConfig(k_neighbors=2, seed=1))
        assert len(out) == 100
        assert int((out.provenance == PROV_SYNTHETIC).sum()) == 45
        assert out.class_counts() == (50, 50)

    def test_originals_untouched_and_first(self):
        rng = np.random.default_rng(3)
        X = np.vstack([rng.normal(size=(4, 2)), rng.normal(loc=5, size=(9, 2))])
        y = np.array([1] * 4 + [0] * 9)
        data = dataset(X, y)
        out = smote_oversample(data, ResampleConfig(k_neighbors=2, seed=4))
        np.testing.assert_array_equal(out.features[:13], X)
        np.testing.assert_array_equal(out.labels[:13], y)
        assert (out.provenance[:13] == PROV_ORIGINAL).all()

    def test_synthetic_rows_are_convex_combinations(self):
        rng = np.random.default_rng(8)
        X = np.vstack([rng.normal(size=(6, 4)), rng.normal(loc=3, size=(40, 4))])
        y = np.array([1] * 6 + [0] * 40)
        out = smote_oversample(dataset(X, y), ResampleConfig(k_neighbors=3, seed=5))
        syn = np.flatnonzero(out.provenance == PROV_SYNTHETIC)
        assert len(syn) == 34
        for row in syn:
            i, nn = out.parent_idx[row]
            lam = out.parent_lam[row]
            assert 0.0 <= lam <= 1.0
            assert out.labels[i] == out.labels[nn] == 1
            expect = X[i] + lam * (X[nn] - X[i])
            np.testing.assert_allclose(out.features[row], expect, atol=1e-9)

    def test_singleton_minority_rejected(self):
        X = np.array([[0.0], [1.0], [2.0]])
        with pytest.raises(DegenerateDataError):
            smote_oversample(dataset(X, [1, 0, 0]), ResampleConfig(k_neighbors=1))

    def test_k_must_be_below_minority_count(self):
        X = np.array([[0.0], [0.5], [1.0], [2.0], [3.0]])
        with pytest.raises(ConfigError):
            smote_oversample(dataset(X, [1, 1, 0, 0, 0]), ResampleConfig(k_neighbors=2))

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        X = np.vstack([rng.normal(size=(5, 3)), rng.normal(loc=2, size=(20, 3))])
        y = np.array([1] * 5 + [0] * 20)
        cfg = ResampleConfig(k_neighbors=2, seed=77)
        a = smote_oversample(dataset(X, y), cfg)
        b = smote_oversample(dataset(X, y), cfg)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.parent_idx, b.parent_idx)

    def test_neighbors_come_from_minority_class(self):
        # minority pair far apart with majority points in between: parents
        # must still both be minority rows
        X = np.array([[0.0], [10.0], [4.9], [5.1], [5.0]])
        y = np.array([1, 1, 0, 0, 0])
        out = smote_oversample(dataset(X, y), ResampleConfig(k_neighbors=1, seed=0))
        syn = np.flatnonzero(out.provenance == PROV_SYNTHETIC)
        assert set(out.parent_idx[syn].ravel().tolist()) <= {0, 1}


class TestTomekLinks:
    def test_three_point_example(self):
        data = dataset([[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]], [1, 0, 0])
        assert find_tomek_links(data) == [(0, 1)]
        assert tomek_links_bruteforce(data.features, data.labels) == [(0, 1)]

    def test_separated_clusters_have_no_links(self):
        a = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]])
        b = a + 10.0
        data = dataset(np.vstack([a, b]), [1, 1, 1, 0, 0, 0])
        assert find_tomek_links(data) == []

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_bruteforce_oracle(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(40, 3))
        y = (rng.random(40) < 0.4).astype(int)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        data = dataset(X, y)
        assert find_tomek_links(data) == tomek_links_bruteforce(X, y)

    def test_duplicate_cross_class_points_link(self):
        data = dataset([[1.0, 1.0], [1.0, 1.0], [9.0, 9.0]], [1, 0, 0])
        assert (0, 1) in find_tomek_links(data)


class TestSmoteTomek:
    def test_no_overlap_equals_smote_alone(self):
        rng = np.random.default_rng(2)
        X = np.vstack([rng.normal(size=(5, 2)), rng.normal(loc=50, size=(20, 2))])
        y = np.array([1] * 5 + [0] * 20)
        cfg = ResampleConfig(k_neighbors=2, seed=3)
        combined = smote_tomek_resample(dataset(X, y), cfg)
        smote_only = smote_oversample(dataset(X, y), cfg)
        assert np.array_equal(combined.features, smote_only.features)

    def test_traced_two_stage_outcome(self):
        # trace both stages with a fixed seed: the combined output must equal
        # the SMOTE output minus the majority member of every oracle-found link
        X = np.array([[0.0, 0.0], [0.0, 1.0], [0.05, 0.0], [5.0, 0.0], [6.0, 0.0]])
        y = np.array([1, 1, 0, 0, 0])
        cfg = ResampleConfig(k_neighbors=1, seed=1)
        over = smote_oversample(dataset(X, y), cfg)
        links = tomek_links_bruteforce(over.features, over.labels)
        assert links, "fixture must actually produce a boundary link"
        drop = {a if over.labels[a] == 0 else b for a, b in links}
        keep = [i for i in range(len(over)) if i not in drop]

        out = smote_tomek_resample(dataset(X, y), cfg)
        np.testing.assert_array_equal(out.features, over.features[keep])
        np.testing.assert_array_equal(out.labels, over.labels[keep])
        kept_originals = {tuple(r) for r in out.features[out.provenance == PROV_ORIGINAL]}
        assert (0.0, 0.0) in kept_originals and (0.0, 1.0) in kept_originals
        assert (0.05, 0.0) not in kept_originals  # the boundary majority member

    def test_cleaning_is_idempotent(self):
        rng = np.random.default_rng(4)
        X = np.vstack([rng.normal(size=(8, 2)), rng.normal(loc=1.0, size=(30, 2))])
        y = np.array([1] * 8 + [0] * 30)
        out = smote_tomek_resample(dataset(X, y), ResampleConfig(k_neighbors=3, seed=5))
        majority = 0
        remaining = [
            (a, b) for a, b in find_tomek_links(out)
            if out.labels[a] == majority or out.labels[b] == majority
        ]
        assert remaining == []

    def test_minority_originals_never_removed(self):
        rng = np.random.default_rng(6)
        X = np.vstack([rng.normal(size=(6, 2)), rng.normal(loc=0.5, size=(25, 2))])
        y = np.array([1] * 6 + [0] * 25)
        out = smote_tomek_resample(dataset(X, y), ResampleConfig(k_neighbors=2, seed=7))
        kept = {tuple(r) for r in out.features[out.provenance == PROV_ORIGINAL]}
        for i in range(6):
            assert tuple(X[i]) in kept

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        X = np.vstack([rng.normal(size=(5, 2)), rng.normal(loc=1, size=(30, 2))])
        y = np.array([1] * 5 + [0] * 30)
        cfg = ResampleConfig(k_neighbors=2, seed=42)
        a = smote_tomek_resample(dataset(X, y), cfg)
        b = smote_tomek_resample(dataset(X, y), cfg)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)


class TestDatasetValidation:
    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            dataset([[np.inf]], [0])

    def test_nonbit_labels_rejected(self):
        with pytest.raises(ValueError):
            dataset([[1.0]], [2])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            dataset([[1.0], [2.0]], [0])

    def test_csv_export(self, tmp_path):
        data = dataset([[1.0, 2.0], [3.0, 4.0]], [0, 1])
        path = tmp_path / "data.csv"
        write_dataset_csv(data, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "feature_0,feature_1,label,provenance"
        assert lines[1] == "1.0,2.0,0,original"
