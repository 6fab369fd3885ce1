import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atmas import experiments as ex
from atmas.auth.forest import TrainingError
from atmas.auth.metrics import ConfusionMatrix
from atmas.config import ConfigError, ScenarioConfig


@pytest.fixture(scope="module")
def tiny():
    return ScenarioConfig().replace(dataset__n_mu=2, dataset__n_windows=120, forest__n_trees=10)


class TestHelpers:
    def test_factor_sets(self):
        assert ex.cumulative_sets()[0] == (1,) and ex.cumulative_sets()[-1] == tuple(range(1, 10))
        combos = ex.combo_sets(3)
        assert len(combos) == math.comb(9, 3) == 84
        assert len(set(combos)) == 84
        assert sum(1 in c for c in combos) == math.comb(8, 2)

    def test_label(self):
        assert ex.factor_label((3, 1, 2)) == "1-2-3"

    @given(st.lists(st.integers(0, 1), min_size=2, max_size=200), st.integers(0, 2**32))
    def test_stratified_split(self, labels, seed):
        y = np.asarray(labels, dtype=np.int8)
        tr, te = ex.stratified_split(y, np.random.default_rng(seed), 0.3)
        assert len(np.intersect1d(tr, te)) == 0
        assert len(tr) + len(te) == len(y)
        for c in (0, 1):
            n_c = int(np.sum(y == c))
            assert int(np.sum(y[te] == c)) == int(round(0.3 * n_c))

    def test_spec_validation(self, tiny):
        with pytest.raises(ConfigError):
            ex.illegal_access_spec(tiny, seeds=[0], fractions=[0.99]).validate()
        with pytest.raises(ConfigError):
            ex.illegal_access_spec(tiny, seeds=[0], algorithms=["svm"]).validate()

    def test_summary_population_std(self):
        rows = [
            ex.ResultRow("forest", 0.1, s, (1,), ConfusionMatrix(tp=a, tn=0, fp=0, fn=10 - a))
            for s, a in enumerate((8, 9, 10))
        ]
        s = ex.summarize(rows)[0]
        assert s.mean_acc == pytest.approx(0.9)
        assert s.std_acc == pytest.approx(np.std([0.8, 0.9, 1.0]))
        assert (s.min_acc, s.max_acc, s.n) == (0.8, 1.0, 3)

    def test_ranking_and_groups(self):
        mk = lambda f, acc: ex.SummaryRow("forest", 0.3, f, 1, acc, 0.0, acc, acc)
        summary = [mk((1, 2, 3), 0.9), mk((2, 3, 4), 0.7), mk((1, 4, 5), 0.95)]
        assert [s.factors for s in ex.combo_ranking(summary)] == [(1, 4, 5), (1, 2, 3), (2, 3, 4)]
        with_f1, without = ex.group_means_by_factor(summary, 1)
        assert with_f1 == pytest.approx(0.925) and without == pytest.approx(0.7)


class TestSweeps:
    def test_acc_matches_counts(self, tiny):
        rows = ex.run_sweep(ex.illegal_access_spec(tiny, seeds=[0], algorithms=["forest", "logreg"], fractions=[0.3]))
        for r in rows:
            assert r.status == "ok"
            assert r.acc == (r.cm.tp + r.cm.tn) / (r.cm.tp + r.cm.tn + r.cm.fp + r.cm.fn)
            # 2 MUs x round(0.3 * 120) test windows
            assert r.cm.total == 2 * 36

    def test_fraction_zero_degenerate(self, tiny):
        rows = ex.run_sweep(ex.illegal_access_spec(tiny, seeds=[0], algorithms=["forest"], fractions=[0.0]))
        (r,) = rows
        assert r.status == "degenerate"
        assert r.cm.tp == r.cm.fn == r.cm.fp == 0
        assert r.acc == 1.0

    def test_failed_cell_recorded(self, tiny, monkeypatch):
        def boom(*a, **k):
            raise TrainingError("synthetic failure")

        monkeypatch.setattr(ex, "train_model", boom)
        (r,) = ex.run_sweep(ex.illegal_access_spec(tiny, seeds=[0], algorithms=["forest"], fractions=[0.3]))
        assert r.cm is None and r.status.startswith("failed:")
        assert r.csv_row()[3] == ""
        (s,) = ex.summarize([r])
        assert s.n == 0 and math.isnan(s.mean_acc)

    def test_common_streams_across_algorithms(self, tiny):
        spec = ex.illegal_access_spec(tiny, seeds=[3], algorithms=["forest", "tree"], fractions=[0.2, 0.4])
        rows = ex.run_sweep(spec)
        pos = {(r.algorithm, r.illegal_fraction): r.cm.tp + r.cm.fn for r in rows}
        assert pos[("forest", 0.2)] == pos[("tree", 0.2)]
        assert pos[("forest", 0.4)] == pos[("tree", 0.4)]

    def test_outputs_deterministic(self, tiny, tmp_path):
        spec = ex.factor_combo_spec(tiny, seeds=[0, 1])
        spec.factor_sets = spec.factor_sets[:3]
        a = ex.run_and_write(spec, tmp_path / "a")
        b = ex.run_and_write(spec, tmp_path / "b", jobs=2)
        for name in ("rows", "summary", "ranking"):
            assert a.files[name].read_bytes() == b.files[name].read_bytes()
        header = a.files["ranking"].read_text().splitlines()[0]
        assert header == ",".join(ex.RANKING_HEADER)
        assert len(ex.read_rows(a.files["rows"])) == 6

    def test_run_directory(self, tmp_path):
        assert ex.run_directory(tmp_path, "factor-count", "x") == tmp_path / "factor-count" / "x"
        assert ex.run_directory(tmp_path, "factor-count").name.endswith("Z")
