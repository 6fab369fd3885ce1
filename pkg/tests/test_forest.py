import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atmas.auth.forest import (
    ALGORITHMS,
    DecisionTree,
    DimensionError,
    ForestModel,
    TrainingError,
    grow_tree,
    train_forest,
    train_model,
)
from atmas.config import ForestConfig

CELLS = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR = np.array([0, 1, 1, 0], dtype=np.int8)


def noisy_xor(reps=100, label_noise=0.03, jitter=0.0, seed=0):
    """The 4-cell XOR truth table, each cell replicated ``reps`` times."""
    rng = np.random.default_rng(seed)
    X = np.repeat(CELLS, reps, axis=0) + rng.normal(0.0, jitter, (4 * reps, 2)) if jitter else np.repeat(CELLS, reps, axis=0)
    y = np.repeat(XOR, reps)
    flip = rng.random(len(y)) < label_noise
    return X, np.where(flip, 1 - y, y).astype(np.int8)


def separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 2))
    score = X[:, 0] + 0.5 * X[:, 1]
    keep = np.abs(score) > 0.05
    return X[keep], (score[keep] > 0).astype(np.int8)


def is_linearly_separable(X, y):
    """Brute force over directions: some projection puts every class-1 point above every class-0 point."""
    for th in np.linspace(0, np.pi, 3601):
        p = X @ np.array([np.cos(th), np.sin(th)])
        for a, b in ((p[y == 1], p[y == 0]), (p[y == 0], p[y == 1])):
            if a.min() > b.max():
                return True
    return False


def training_acc(model, X, y):
    return float(np.mean((model.predict(X) > 0.5) == y))


class TestForestOracles:
    def test_separable(self):
        X, y = separable()
        assert is_linearly_separable(X, y)
        m = train_forest(X, y, (1, 3), ForestConfig(n_trees=25), 0, preprocess=False)
        assert training_acc(m, X, y) == 1.0

    @pytest.mark.parametrize("depth", [2, 3, 6, 12])
    def test_label_noise_xor(self, depth):
        X, y = noisy_xor()
        m = train_forest(X, y, (1, 3), ForestConfig(n_trees=50, max_depth=depth), 1, preprocess=False)
        assert training_acc(m, X, y) >= 0.95

    @pytest.mark.parametrize("depth", [4, 12])
    def test_jittered_xor(self, depth):
        X, y = noisy_xor(label_noise=0.0, jitter=0.1)
        m = train_forest(X, y, (1, 3), ForestConfig(n_trees=50, max_depth=depth), 1, preprocess=False)
        assert training_acc(m, X, y) >= 0.95

    def test_single_tree_forest(self):
        X, y = noisy_xor(jitter=0.2)
        m = train_forest(X, y, (1, 3), ForestConfig(n_trees=1, max_depth=5), 3, preprocess=False)
        seed = m.tree_seeds[0]
        boot = np.random.default_rng(seed).integers(0, len(y), size=len(y))
        tree = grow_tree(X, y, boot, 5, m.feature_subset_size, seed)
        assert np.array_equal(m.predict(X), tree.votes(X).astype(float))
        assert np.array_equal(tree.arrays()[0], m.trees[0].arrays()[0])


class TestForestModel:
    def test_vote_fraction(self):
        X, y = noisy_xor()
        m = train_forest(X, y, (1, 3), ForestConfig(n_trees=50, max_depth=3), 0, preprocess=False)
        votes = m.vote_counts(X)
        assert np.array_equal(m.predict(X), votes / 50)

    def test_vote_split_30_of_50(self):
        spoof = DecisionTree(*(np.array(v) for v in ([-1], [0.0], [-1], [-1], [0], [1])))
        legit = DecisionTree(*(np.array(v) for v in ([-1], [0.0], [-1], [-1], [1], [0])))
        m = ForestModel([spoof] * 30 + [legit] * 20, None, 1, 1, list(range(50)), n_features=2)
        assert m.predict(np.zeros(2)) == 0.6
        assert ForestModel([spoof] * 5, None, 1, 1, list(range(5)), n_features=2).predict(np.zeros(2)) == 1.0

    def test_dimension_mismatch(self):
        X, y = noisy_xor()
        m = train_forest(X, y, (1, 3), ForestConfig(n_trees=3), 0, preprocess=False)
        with pytest.raises(DimensionError):
            m.predict(np.zeros((2, 3)))

    def test_single_class(self):
        with pytest.raises(TrainingError):
            train_forest(np.zeros((10, 2)), np.zeros(10), (1, 3), preprocess=False)

    def test_seeded(self):
        X, y = noisy_xor(jitter=0.2)
        a = train_forest(X, y, (1, 3), ForestConfig(n_trees=10), 7, preprocess=False)
        b = train_forest(X, y, (1, 3), ForestConfig(n_trees=10), 7, preprocess=False)
        assert np.array_equal(a.predict(X), b.predict(X))

    def test_dict_round_trip(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(60, 10))
        y = (X[:, 0] > 0).astype(np.int8)
        m = train_forest(X, y, (1, 2, 7), ForestConfig(n_trees=5), 0)
        back = ForestModel.from_dict(m.to_dict())
        assert np.array_equal(back.score(X), m.score(X))

    @given(st.integers(1, 6), st.integers(0, 2**31))
    @settings(max_examples=20)
    def test_depth_bound(self, depth, seed):
        X, y = noisy_xor(reps=20, jitter=0.3, seed=seed % 100)
        m = train_forest(X, y, (1, 3), ForestConfig(n_trees=3, max_depth=depth), seed, preprocess=False)
        assert all(t.depth() <= depth for t in m.trees)
        s = m.predict(X)
        assert np.all((s >= 0) & (s <= 1))


class TestBaselines:
    @pytest.mark.parametrize("alg", ALGORITHMS)
    def test_learn_simple_rule(self, alg):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(300, 10))
        y = (X[:, 0] > 0).astype(np.int8)
        m = train_model(alg, X, y, (1, 4), ForestConfig(n_trees=20), 0)
        assert np.mean(m.classify(X) == y) >= 0.9

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError):
            train_model("svm", np.zeros((4, 10)), np.array([0, 1, 0, 1]), (1,))
