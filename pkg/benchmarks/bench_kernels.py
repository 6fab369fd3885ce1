"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends get identical inputs; outputs are checked for equality before
timings are reported. Without a compiled build only the Python column is shown.
"""

import argparse
import statistics
import time

import numpy as np

from atmas import _pykernels

try:
    from atmas import _ckernels
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None


def _time(fn, repeat: int) -> float:
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def _inputs(seed: int = 0):
    rng = np.random.default_rng(seed)
    X = rng.random((1400, 10))
    y = ((X[:, 0] + 0.3 * rng.normal(size=len(X))) > 0.5).astype(np.int8)
    boot = rng.integers(0, len(y), len(y))
    n = 3600
    walk = (
        100.0, 100.0, 100.0, 100.0, 20.0, 0.0, 200.0, 1.0,
        np.abs(rng.normal(30.0, 10.0, n)), rng.normal(0.0, 0.2, n), rng.random((n // 10 + 16, 2)), 0.6,
    )
    return X, y, boot, walk


def _forest(mod, X, y, n_trees=50):
    rng = np.random.default_rng(1)
    trees = [mod.build_tree(X, y, rng.integers(0, len(y), len(y)), 12, 3, 2, s) for s in range(n_trees)]
    offsets = np.concatenate([[0], np.cumsum([len(t[0]) for t in trees])]).astype(np.int64)
    cols = [np.concatenate([t[i] for t in trees]) for i in range(6)]
    return (offsets, *cols)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    X, y, boot, walk = _inputs()
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels

    packed = {name: _forest(mod, X, y) for name, mod in backends.items()}
    if "cython" in backends:
        for a, b in zip(packed["python"], packed["cython"]):
            assert np.array_equal(a, b), "backends disagree on build_tree"
        assert np.array_equal(_pykernels.waypoint_walk(*walk), _ckernels.waypoint_walk(*walk))

    cases = {
        "build_tree (1400x10, depth 12)": lambda m: m.build_tree(X, y, boot, 12, 3, 2, 7),
        "forest_votes (50 trees, 1400 rows)": lambda m: m.forest_votes(*packed["python"], X),
        "waypoint_walk (3600 steps)": lambda m: m.waypoint_walk(*walk),
    }
    print(f"{'kernel':38s} " + " ".join(f"{n:>10s}" for n in backends) + ("   speedup" if len(backends) > 1 else ""))
    for label, fn in cases.items():
        times = {name: _time(lambda m=mod: fn(m), args.repeat) for name, mod in backends.items()}
        row = f"{label:38s} " + " ".join(f"{1e3 * t:8.2f}ms" for t in times.values())
        if len(times) > 1:
            row += f"  {times['python'] / times['cython']:7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
