import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atmas.config import ScenarioConfig
from atmas.scenario.dataset import (
    RAW_COLUMNS,
    Dataset,
    FactorVector,
    Label,
    generate_dataset,
    generate_streams,
    mix_streams,
    select_columns,
)
from atmas.scenario.traffic import ServiceType


@pytest.fixture(scope="module")
def small_cfg():
    return ScenarioConfig().replace(dataset__n_mu=3, dataset__n_windows=200)


@pytest.fixture(scope="module")
def streams(small_cfg):
    return generate_streams(small_cfg, seed=4)


class TestDataset:
    def test_fraction_zero_all_legit(self, streams):
        ds = mix_streams(streams, 0.0)
        assert np.all(ds.y == Label.Legitimate)

    def test_exact_partition(self):
        cfg = ScenarioConfig()
        ds = generate_dataset(cfg, n_mu=1, n_windows=1000, illegal_fraction=0.5, seed=1)
        assert abs(int(ds.y.sum()) - 500) <= 1

    @given(st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=25)
    def test_spoof_sets_nested(self, streams, a, b):
        lo, hi = sorted((a, b))
        y_lo, y_hi = mix_streams(streams, lo).y, mix_streams(streams, hi).y
        assert np.all(y_hi >= y_lo)

    def test_spoof_rows_come_from_spoof_stream(self, streams):
        ds = mix_streams(streams, 0.3)
        for mu in range(streams.n_mu):
            part = ds.for_mu(mu)
            src = np.where(part.y[:, None] == 1, streams.spoof[mu], streams.legit[mu])
            assert np.array_equal(part.X, src)

    def test_invalid_fraction(self, streams):
        with pytest.raises(ValueError):
            mix_streams(streams, 1.5)

    def test_seeded(self, small_cfg):
        a = generate_streams(small_cfg, seed=9, n_windows=50)
        b = generate_streams(small_cfg, seed=9, n_windows=50)
        assert all(np.array_equal(x, y) for x, y in zip(a.legit + a.spoof, b.legit + b.spoof))

    def test_factor_ranges(self, streams):
        X = np.concatenate(streams.legit + streams.spoof)
        assert X.shape[1] == len(RAW_COLUMNS)
        assert np.all(X[:, 0] >= 0)
        assert set(np.unique(X[:, 1])) <= {0, 1, 2}
        assert np.all(X[:, 3] >= 1.0)
        assert np.all((X[:, 8] >= 0) & (X[:, 8] < 360))
        assert np.all(X[:, 5] <= 20.0)
        assert np.all((X[:, 9] > 0) & (X[:, 9] <= 90))

    def test_csv_round_trip(self, streams, tmp_path):
        ds = mix_streams(streams, 0.2)
        path = tmp_path / "d.csv"
        ds.to_csv(path)
        back = Dataset.from_csv(path)
        assert np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)
        assert np.array_equal(back.mu, ds.mu) and np.array_equal(back.window, ds.window)
        assert path.read_text().splitlines()[0] == "mu_id,window,f1,f2,f3,f4,f5,f6,f7_x,f7_y,f8,f9,label"

    def test_bad_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            Dataset.from_csv(path)

    def test_factor_vector_round_trip(self):
        fv = FactorVector(1.0, ServiceType.Streaming, 2.0, 1.5, 7, 3.0, (4.0, -5.0), 90.0, 60.0)
        assert FactorVector.from_row(fv.as_row()) == fv

    def test_select_columns(self):
        X = np.arange(20.0).reshape(2, 10)
        assert select_columns(X, (7, 1)).tolist() == [[0.0, 6.0, 7.0], [10.0, 16.0, 17.0]]

    def test_indexing(self, streams):
        ds = mix_streams(streams, 0.5)
        w = ds[3]
        assert w.mu_id == 0 and w.window_index == 3
        assert len(list(ds)) == len(ds)
