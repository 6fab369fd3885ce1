import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atmas.auth.engine import (
    EnrollmentDataInsufficient,
    ModelFormatError,
    ModelMissing,
    ModelRegistry,
    Verdict,
    authenticate_window,
    decide,
    decision_threshold,
    enroll,
    enrollment_negatives,
    load_model,
)
from atmas.auth.metrics import ConfusionMatrix, compute_accuracy
from atmas.common import SecurityLevel
from atmas.config import ForestConfig, ScenarioConfig
from atmas.scenario.dataset import generate_streams

FAST = ForestConfig(n_trees=20)


@pytest.fixture(scope="module")
def streams():
    cfg = ScenarioConfig().replace(dataset__n_mu=3)
    return generate_streams(cfg, seed=2, n_windows=400)


class TestMetrics:
    def test_formula(self):
        assert compute_accuracy(ConfusionMatrix(tp=45, tn=47, fp=5, fn=3)) == pytest.approx(0.92)

    def test_perfect(self):
        assert compute_accuracy(ConfusionMatrix(tp=3, tn=4)) == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            compute_accuracy(ConfusionMatrix())

    def test_negative(self):
        with pytest.raises(ValueError):
            ConfusionMatrix(tp=-1)

    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1))
    def test_from_predictions(self, pairs):
        t, p = zip(*pairs)
        cm = ConfusionMatrix.from_predictions(t, p)
        assert cm.total == len(pairs)
        assert compute_accuracy(cm) == pytest.approx(np.mean(np.array(t) == np.array(p)))
        assert 0.0 <= compute_accuracy(cm) <= 1.0

    def test_add(self):
        assert ConfusionMatrix(1, 2, 3, 4) + ConfusionMatrix(1, 1, 1, 1) == ConfusionMatrix(2, 3, 4, 5)


class TestDecision:
    def test_high_denies(self):
        assert decide(0.9, decision_threshold(SecurityLevel.High)) is Verdict.Deny

    def test_low_grants(self):
        assert decide(0.3, decision_threshold("Low")) is Verdict.Grant

    def test_tie_grants(self):
        assert decide(0.5, 0.5) is Verdict.Grant

    def test_thresholds_ordered(self):
        assert decision_threshold("High") < decision_threshold("Medium") < decision_threshold("Low")

    def test_unknown_level(self):
        with pytest.raises(ValueError):
            decision_threshold("Extreme")


class TestEnrollment:
    def test_insufficient(self, streams):
        with pytest.raises(EnrollmentDataInsufficient):
            enroll(ModelRegistry(), "mu-0", streams.legit[0][:199], streams.spoof[0][:50], FAST, 0)

    def test_holdout_legit_scores_below_threshold(self, streams):
        reg = ModelRegistry()
        rng = np.random.default_rng(0)
        neg = enrollment_negatives(streams, 0, 200, rng)
        enroll(reg, "mu-0", streams.legit[0][:200], neg, FAST, 1)
        held_legit = reg.get("mu-0").score(streams.legit[0][200:])
        held_spoof = reg.get("mu-0").score(streams.spoof[0][200:])
        thr = decision_threshold("Medium")
        assert held_legit.mean() < thr
        assert held_spoof.mean() > held_legit.mean()

    def test_authenticate_window(self, streams):
        reg = ModelRegistry()
        neg = enrollment_negatives(streams, 1, 200, np.random.default_rng(0))
        enroll(reg, "mu-1", streams.legit[1][:200], neg, FAST, 1)
        d = authenticate_window(reg, "mu-1", streams.legit[1][300], "Medium", window=300)
        assert d.window == 300 and d.threshold == decision_threshold("Medium")
        assert d.verdict is decide(d.spoof_score, d.threshold)

    def test_negatives_mix(self, streams):
        neg = enrollment_negatives(streams, 0, 11, np.random.default_rng(0))
        assert neg.shape == (11, 10)


class TestRegistry:
    def _model(self, streams, seed=0):
        reg = ModelRegistry()
        return enroll(reg, "x", streams.legit[0][:200], streams.spoof[0][:200], ForestConfig(n_trees=3), seed)

    def test_missing(self):
        with pytest.raises(ModelMissing):
            ModelRegistry().get("nobody")

    def test_versions_increase(self, streams):
        reg = ModelRegistry()
        a = enroll(reg, "mu", streams.legit[0][:200], streams.spoof[0][:200], ForestConfig(n_trees=3), 0)
        assert a.version == 1
        b = enroll(reg, "mu", streams.legit[0][:200], streams.spoof[0][:200], ForestConfig(n_trees=3), 1)
        assert b.version == 2 and reg.get("mu") is b and len(reg) == 1

    def test_save_load(self, streams, tmp_path):
        reg = ModelRegistry()
        enroll(reg, "mu-a", streams.legit[0][:200], streams.spoof[0][:200], ForestConfig(n_trees=3), 0)
        enroll(reg, "mu-b", streams.legit[1][:200], streams.spoof[1][:200], ForestConfig(n_trees=3), 0)
        reg.save(tmp_path)
        back = ModelRegistry.load(tmp_path)
        assert "mu-a" in back and "mu-b" in back
        X = streams.legit[2][:50]
        assert np.array_equal(back.get("mu-a").score(X), reg.get("mu-a").score(X))

    def test_bad_files(self, tmp_path):
        p = tmp_path / "m.model.json"
        p.write_text("{")
        with pytest.raises(ModelFormatError):
            load_model(p)
        p.write_text(json.dumps({"magic": "nope"}))
        with pytest.raises(ModelFormatError):
            load_model(p)
        p.write_text(json.dumps({"magic": "ATMAS-MODEL", "format_version": 99}))
        with pytest.raises(ModelFormatError):
            load_model(p)
