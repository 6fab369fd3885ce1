"""Random forest of Gini CART trees, plus the classic baselines.

Tree induction and voting run in :mod:`atmas.kernels`. Every model shares
the :class:`PreprocessStats` contract: ``score(X_raw)`` preprocesses raw
factor rows, ``predict(Z)`` scores already-preprocessed rows. Scores are
spoof probabilities in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from atmas import kernels
from atmas.auth.preprocess import PreprocessStats, apply_preprocess, fit_preprocess
from atmas.config import ForestConfig


class TrainingError(ValueError):
    pass


class DimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    count0: np.ndarray
    count1: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def arrays(self) -> tuple:
        return (self.feature, self.threshold, self.left, self.right, self.count0, self.count1)

    def votes(self, Z: np.ndarray) -> np.ndarray:
        return kernels.tree_votes(*self.arrays(), np.atleast_2d(Z))

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] >= 0:
                stack += [(int(self.left[node]), d + 1), (int(self.right[node]), d + 1)]
        return best

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "count0", "count1")}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            np.asarray(d["feature"], np.int32), np.asarray(d["threshold"], np.float64),
            np.asarray(d["left"], np.int32), np.asarray(d["right"], np.int32),
            np.asarray(d["count0"], np.int32), np.asarray(d["count1"], np.int32),
        )


def grow_tree(Z, y, sample_idx, max_depth: int, mtry: int, seed: int, min_samples_split: int = 2) -> DecisionTree:
    return DecisionTree(*kernels.build_tree(Z, y, sample_idx, max_depth, mtry, min_samples_split, seed))


class _Model:
    stats: PreprocessStats | None

    @property
    def n_features(self) -> int:
        return self.stats.n_features

    @property
    def active_factors(self) -> tuple[int, ...]:
        return self.stats.active_factors if self.stats is not None else ()

    def _check(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        Z2 = Z[None, :] if Z.ndim == 1 else Z
        if Z2.ndim != 2 or Z2.shape[1] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {Z2.shape[-1]}")
        return Z2

    def predict(self, Z):
        """Spoof score(s) for preprocessed row(s)."""
        Z2 = self._check(Z)
        s = self._scores(Z2)
        return float(s[0]) if np.ndim(Z) == 1 else s

    def score(self, X_raw):
        """Spoof score(s) for raw factor row(s)."""
        if self.stats is None:
            return self.predict(X_raw)
        return self.predict(apply_preprocess(self.stats, X_raw))

    def classify(self, X_raw, threshold: float = 0.5) -> np.ndarray:
        """1 = Spoof iff score strictly exceeds ``threshold``."""
        return (np.atleast_1d(self.score(X_raw)) > threshold).astype(np.int8)

    def _scores(self, Z: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(eq=False)
class ForestModel(_Model):
    trees: list[DecisionTree]
    stats: PreprocessStats | None
    max_depth: int
    feature_subset_size: int
    tree_seeds: list[int]
    version: int = 1
    n_features: int = 0
    _packed: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.stats is not None:
            self.n_features = self.stats.n_features

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _pack(self) -> tuple:
        if self._packed is None:
            sizes = [t.n_nodes for t in self.trees]
            offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
            cols = [np.concatenate([t.arrays()[i] for t in self.trees]) for i in range(6)]
            self._packed = (offsets, *cols)
        return self._packed

    def vote_counts(self, Z) -> np.ndarray:
        return kernels.forest_votes(*self._pack(), self._check(Z))

    def _scores(self, Z: np.ndarray) -> np.ndarray:
        return kernels.forest_votes(*self._pack(), Z) / self.n_trees

    def to_dict(self) -> dict:
        return {
            "kind": "forest",
            "max_depth": self.max_depth,
            "feature_subset_size": self.feature_subset_size,
            "tree_seeds": [int(s) for s in self.tree_seeds],
            "version": self.version,
            "n_features": self.n_features,
            "stats": None if self.stats is None else self.stats.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls(
            trees=[DecisionTree.from_dict(t) for t in d["trees"]],
            stats=None if d["stats"] is None else PreprocessStats.from_dict(d["stats"]),
            max_depth=d["max_depth"],
            feature_subset_size=d["feature_subset_size"],
            tree_seeds=list(d["tree_seeds"]),
            version=d.get("version", 1),
            n_features=d["n_features"],
        )


def _check_training(y: np.ndarray) -> None:
    if len(y) == 0 or np.all(y == y[0]):
        raise TrainingError("training data must contain both Legitimate and Spoof windows")


def default_mtry(n_features: int) -> int:
    return max(1, int(math.floor(math.sqrt(n_features))))


def train_forest(
    X_raw: np.ndarray,
    y: np.ndarray,
    active_factors: Sequence[int],
    hyperparams: ForestConfig | None = None,
    rng: np.random.Generator | int | None = None,
    *,
    preprocess: bool = True,
) -> ForestModel:
    """Bootstrap-aggregated CART trees with sqrt(d) features tried per node.

    With ``preprocess=False`` the columns of ``X_raw`` are used verbatim and
    the model carries no statistics.
    """
    hp = hyperparams or ForestConfig()
    rng = np.random.default_rng(rng)
    y = np.asarray(y, dtype=np.int8)
    _check_training(y)
    stats = fit_preprocess(X_raw, active_factors) if preprocess else None
    Z = apply_preprocess(stats, X_raw) if preprocess else np.asarray(X_raw, dtype=np.float64)
    n, d = Z.shape
    mtry = default_mtry(d)
    trees, seeds = [], []
    for _ in range(hp.n_trees):
        seed = int(rng.integers(0, 2**63))
        boot = np.random.default_rng(seed).integers(0, n, size=n)
        trees.append(grow_tree(Z, y, boot, hp.max_depth, mtry, seed, hp.min_samples_split))
        seeds.append(seed)
    return ForestModel(trees, stats, hp.max_depth, mtry, seeds, n_features=d)


# -- baselines ----------------------------------------------------------------


@dataclass(eq=False)
class TreeModel(_Model):
    """Single CART tree on the full training set, all features tried per node."""

    tree: DecisionTree
    stats: PreprocessStats

    def _scores(self, Z):
        return self.tree.votes(Z).astype(np.float64)


@dataclass(eq=False)
class KNNModel(_Model):
    Z: np.ndarray
    y: np.ndarray
    stats: PreprocessStats
    k: int = 5

    def _scores(self, Q):
        k = min(self.k, len(self.y))
        out = np.empty(len(Q))
        for s in range(0, len(Q), 512):
            q = Q[s : s + 512]
            d2 = ((q[:, None, :] - self.Z[None, :, :]) ** 2).sum(axis=2)
            # stable sort: equal distances resolve to the lower training index
            nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
            out[s : s + 512] = self.y[nn].mean(axis=1)
        return out


@dataclass(eq=False)
class LogisticModel(_Model):
    w: np.ndarray
    b: float
    stats: PreprocessStats

    def _scores(self, Z):
        return 1.0 / (1.0 + np.exp(-(Z @ self.w + self.b)))


def train_tree(X_raw, y, active_factors, hyperparams: ForestConfig | None = None, rng=None) -> TreeModel:
    hp = hyperparams or ForestConfig()
    y = np.asarray(y, dtype=np.int8)
    _check_training(y)
    stats = fit_preprocess(X_raw, active_factors)
    Z = apply_preprocess(stats, X_raw)
    seed = int(np.random.default_rng(rng).integers(0, 2**63))
    tree = grow_tree(Z, y, np.arange(len(y)), hp.max_depth, Z.shape[1], seed, hp.min_samples_split)
    return TreeModel(tree, stats)


def train_knn(X_raw, y, active_factors, k: int = 5) -> KNNModel:
    y = np.asarray(y, dtype=np.int8)
    _check_training(y)
    stats = fit_preprocess(X_raw, active_factors)
    return KNNModel(apply_preprocess(stats, X_raw), y.astype(np.float64), stats, k)


def train_logreg(X_raw, y, active_factors, epochs: int = 500, rate: float = 0.1) -> LogisticModel:
    """Full-batch gradient descent on mean log-loss from a zero start."""
    y = np.asarray(y, dtype=np.int8)
    _check_training(y)
    stats = fit_preprocess(X_raw, active_factors)
    Z = apply_preprocess(stats, X_raw)
    t = y.astype(np.float64)
    w = np.zeros(Z.shape[1])
    b = 0.0
    n = len(t)
    for _ in range(epochs):
        p = 1.0 / (1.0 + np.exp(-(Z @ w + b)))
        g = p - t
        w -= rate * (Z.T @ g) / n
        b -= rate * g.sum() / n
    return LogisticModel(w, b, stats)


ALGORITHMS = ("forest", "tree", "knn", "logreg")


def train_model(algorithm: str, X_raw, y, active_factors, hyperparams: ForestConfig | None = None, rng=None):
    if algorithm == "forest":
        return train_forest(X_raw, y, active_factors, hyperparams, rng)
    if algorithm == "tree":
        return train_tree(X_raw, y, active_factors, hyperparams, rng)
    if algorithm == "knn":
        return train_knn(X_raw, y, active_factors)
    if algorithm == "logreg":
        return train_logreg(X_raw, y, active_factors)
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
