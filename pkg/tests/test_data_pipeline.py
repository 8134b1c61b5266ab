import numpy as np
import pytest

from mkofl.data_pipeline import (ar_featurize, load_csv, normalize_minmax,
                                 partition, save_csv, synth_generate)
from mkofl.errors import ConfigurationError, IngestionError
from mkofl.evaluation import best_hindsight
from mkofl.kernel_features import build_dictionary, feature_matrix


class TestLoadCsv:
    def test_plain_numeric_file(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1,2,3\n4,5,6\n7,8,9\n")
        ds = load_csv(p, label_column=2)
        assert ds.n == 3 and ds.d == 2
        np.testing.assert_allclose(ds.y, [3, 6, 9])
        assert ds.meta["dropped_rows"] == 0

    def test_header_and_named_columns(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,target\n1,2,3\n4,5,6\n")
        ds = load_csv(p, label_column="target", feature_columns=["b"])
        np.testing.assert_allclose(ds.X[:, 0], [2, 5])
        np.testing.assert_allclose(ds.y, [3, 6])

    def test_malformed_rows_dropped_and_counted(self, tmp_path):
        p = tmp_path / "d.csv"
        rows = ["%d,%d" % (i, i * 2) for i in range(99)]
        rows.insert(40, "oops,not_a_number")
        p.write_text("\n".join(rows) + "\n")
        ds = load_csv(p, label_column=1)
        assert ds.n == 99
        assert ds.meta["dropped_rows"] == 1

    def test_missing_file_names_path(self, tmp_path):
        missing = tmp_path / "nope.csv"
        with pytest.raises(IngestionError, match="nope.csv"):
            load_csv(missing, label_column=0)

    def test_no_numeric_rows(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b\nx,y\n")
        with pytest.raises(IngestionError):
            load_csv(p, label_column=0)

    def test_named_column_needs_header(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1,2\n3,4\n")
        with pytest.raises(IngestionError):
            load_csv(p, label_column="target")

    def test_round_trip_exact(self, tmp_path):
        ds = synth_generate(1e-2, n=50, d=3, noise_sd=0.1, seed=0)
        path = tmp_path / "rt.csv"
        save_csv(ds, path)
        back = load_csv(path, label_column="y")
        np.testing.assert_allclose(back.X, ds.X, rtol=0, atol=0)
        np.testing.assert_allclose(back.y, ds.y, rtol=0, atol=0)


class TestNormalizeMinmax:
    def test_three_point_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("0,1\n5,1\n10,1\n")
        ds = normalize_minmax(load_csv(p, label_column=1))
        np.testing.assert_allclose(ds.X[:, 0], [0, 0.5, 1])

    def test_constant_column_zeroed(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("7,0\n7,5\n7,10\n")
        ds = normalize_minmax(load_csv(p, label_column=1))
        np.testing.assert_allclose(ds.X[:, 0], 0.0)
        np.testing.assert_allclose(ds.y, [0, 0.5, 1])

    def test_idempotent(self):
        ds = synth_generate(1e-1, n=40, d=2, noise_sd=0.2, seed=1)
        once = normalize_minmax(ds)
        twice = normalize_minmax(once)
        np.testing.assert_allclose(twice.X, once.X, atol=1e-15)
        np.testing.assert_allclose(twice.y, once.y, atol=1e-15)

    def test_bounds_and_metadata(self):
        rng = np.random.default_rng(2)
        from mkofl.data_pipeline import Dataset
        ds = Dataset(rng.normal(0, 50, (30, 4)), rng.normal(0, 9, 30), {})
        norm = normalize_minmax(ds)
        assert norm.X.min() >= 0 and norm.X.max() <= 1
        assert norm.y.min() >= 0 and norm.y.max() <= 1
        assert "normalization" in norm.meta


class TestArFeaturize:
    def test_hand_example(self):
        """Series (1,2,3,4) at lag 2 gives ([2,1] -> 3) and ([3,2] -> 4)."""
        ds = ar_featurize(np.array([1.0, 2.0, 3.0, 4.0]), 2)
        np.testing.assert_allclose(ds.X, [[2, 1], [3, 2]])
        np.testing.assert_allclose(ds.y, [3, 4])

    def test_boundary_single_example(self):
        ds = ar_featurize(np.arange(5.0), 4)
        assert ds.n == 1
        np.testing.assert_allclose(ds.X[0], [3, 2, 1, 0])
        assert ds.y[0] == 4

    def test_size_always_n_minus_s(self):
        rng = np.random.default_rng(3)
        for n, s in [(10, 1), (10, 3), (100, 5), (7, 6)]:
            assert ar_featurize(rng.normal(size=n), s).n == n - s

    def test_temporal_order(self):
        """Feature index i holds the value from i+1 steps before the label."""
        series = np.arange(20.0)
        ds = ar_featurize(series, 3)
        for i in range(ds.n):
            label_idx = i + 3
            np.testing.assert_allclose(ds.X[i],
                                       series[label_idx - 3:label_idx][::-1])

    def test_rejects_bad_lag(self):
        with pytest.raises(ConfigurationError):
            ar_featurize(np.arange(5.0), 0)
        with pytest.raises(ConfigurationError):
            ar_featurize(np.arange(5.0), 5)


class TestPartition:
    def test_single_node_is_dataset(self):
        ds = synth_generate(1e-2, n=12, d=2, noise_sd=0.1, seed=4)
        streams = partition(ds, K=1, T=12, seed=0, preserve_order=True)
        np.testing.assert_allclose(streams.X[0], ds.X)
        np.testing.assert_allclose(streams.y[0], ds.y)

    def test_interleaving_definition(self):
        """Unshuffled rows r1..r4 at K=2, T=2: node 0 gets (r1, r3)."""
        from mkofl.data_pipeline import Dataset
        ds = Dataset(np.arange(8.0).reshape(4, 2), np.arange(4.0), {})
        streams = partition(ds, K=2, T=2, seed=0, preserve_order=True)
        np.testing.assert_allclose(streams.y[0], [0, 2])
        np.testing.assert_allclose(streams.y[1], [1, 3])

    def test_no_duplicates_full_coverage(self):
        ds = synth_generate(1e-2, n=60, d=1, noise_sd=0.1, seed=5)
        streams = partition(ds, K=4, T=15, seed=6)
        flat = streams.y.reshape(-1)
        assert flat.size == 60
        assert np.unique(np.round(flat, 12)).size == np.unique(np.round(ds.y, 12)).size

    def test_shuffle_is_seeded(self):
        ds = synth_generate(1e-2, n=40, d=1, noise_sd=0.1, seed=7)
        a = partition(ds, K=2, T=20, seed=8)
        b = partition(ds, K=2, T=20, seed=8)
        c = partition(ds, K=2, T=20, seed=9)
        np.testing.assert_allclose(a.y, b.y)
        assert not np.allclose(a.y, c.y)

    def test_insufficient_rows_reports_max_T(self):
        ds = synth_generate(1e-2, n=10, d=1, noise_sd=0.1, seed=10)
        with pytest.raises(ConfigurationError, match="max feasible T"):
            partition(ds, K=3, T=4, seed=0)

    def test_round_samples_shape(self):
        ds = synth_generate(1e-2, n=20, d=3, noise_sd=0.1, seed=11)
        streams = partition(ds, K=2, T=10, seed=0)
        Xr, yr = streams.round_samples(0)
        assert Xr.shape == (2, 3) and yr.shape == (2,)


class TestSynthGenerate:
    def test_labels_clipped(self):
        ds = synth_generate(1e-2, n=500, d=1, noise_sd=0.5, seed=12)
        assert ds.y.min() >= 0.0 and ds.y.max() <= 1.0

    def test_seeded_determinism(self):
        a = synth_generate(1e-2, n=30, d=2, noise_sd=0.1, seed=13)
        b = synth_generate(1e-2, n=30, d=2, noise_sd=0.1, seed=13)
        np.testing.assert_allclose(a.X, b.X, atol=0)
        np.testing.assert_allclose(a.y, b.y, atol=0)

    def test_metadata_records_generator(self):
        ds = synth_generate(1e-3, n=10, d=2, noise_sd=0.1, seed=14)
        assert ds.meta["bandwidth_sq"] == 1e-3
        assert ds.meta["noise_sd"] == 0.1

    def test_noiseless_hindsight_near_ridge_floor(self):
        """With no noise and the generating kernel in the dictionary, the
        ridge oracle's loss approaches the lam*||w||^2 regularization floor."""
        bw = 1e-2
        ds = synth_generate(bw, n=400, d=1, noise_sd=0.0, seed=15)
        dic = build_dictionary(11, 49, 1, seed=16)
        # position of the generating bandwidth in the ladder
        p_star = 3  # 0-based: bandwidths 1e-5..1e5, so 1e-2 sits at index 3
        assert dic.kernels[p_star].bandwidth_sq == bw
        Z = feature_matrix(dic.samples[p_star], ds.X)
        lam = 1e-4
        w, total = best_hindsight(Z, ds.y, lam)
        floor = ds.n * lam * float(w @ w)
        resid = total - floor
        # residual fitting error is a small fraction of the label energy
        assert resid <= 0.02 * float(ds.y @ ds.y)
