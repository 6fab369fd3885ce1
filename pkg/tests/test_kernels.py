"""The compiled and pure-Python kernels must agree bit for bit."""

import os
import subprocess
import sys

import numpy as np
import pytest

from atmas import _pykernels, kernels

ckernels = pytest.importorskip("atmas._ckernels")


@pytest.fixture
def data():
    rng = np.random.default_rng(21)
    X = rng.normal(size=(300, 6))
    X[:, 2] = np.round(X[:, 2])  # ties in one column
    y = ((X[:, 0] + X[:, 1] ** 2 + 0.3 * rng.normal(size=300)) > 0.8).astype(np.int8)
    return X, y


class TestBackendEquivalence:
    @pytest.mark.parametrize("depth,mtry,seed", [(3, 2, 1), (12, 2, 99), (30, 6, 5), (8, 1, 2**63 - 1)])
    def test_build_tree(self, data, depth, mtry, seed):
        X, y = data
        boot = np.random.default_rng(seed % 1000).integers(0, len(y), len(y))
        a = _pykernels.build_tree(X, y, boot, depth, mtry, 2, seed)
        b = ckernels.build_tree(X, y, boot, depth, mtry, 2, seed)
        for u, v in zip(a, b):
            assert np.array_equal(np.asarray(u), np.asarray(v))

    def test_votes(self, data):
        X, y = data
        trees = [_pykernels.build_tree(X, y, np.arange(len(y)), 6, 3, 2, s) for s in range(5)]
        for t in trees:
            assert np.array_equal(_pykernels.tree_votes(*t, X), ckernels.tree_votes(*t, X))
        offsets = np.concatenate([[0], np.cumsum([len(t[0]) for t in trees])]).astype(np.int64)
        cols = [np.concatenate([t[i] for t in trees]) for i in range(6)]
        assert np.array_equal(_pykernels.forest_votes(offsets, *cols, X), ckernels.forest_votes(offsets, *cols, X))

    @pytest.mark.parametrize("rho", [0.0, 0.7])
    def test_waypoint_walk(self, rho):
        rng = np.random.default_rng(3)
        n = 2000
        args = (1.0, -2.0, 0.0, 0.0, 10.0, -50.0, 50.0, 1.0,
                np.maximum(rng.normal(40, 10, n), 0), rng.normal(0, 0.3, n), rng.random((n // 10 + 16, 2)), rho)
        assert np.array_equal(_pykernels.waypoint_walk(*args), ckernels.waypoint_walk(*args))

    def test_active_backend(self):
        assert kernels.BACKEND == ("python" if os.environ.get("ATMAS_PURE_PYTHON") else "cython")

    def test_env_forces_fallback(self):
        env = dict(os.environ, ATMAS_PURE_PYTHON="1")
        out = subprocess.run(
            [sys.executable, "-c", "from atmas import kernels; print(kernels.BACKEND)"],
            env=env, capture_output=True, text=True, check=True,
        )
        assert out.stdout.strip() == "python"
