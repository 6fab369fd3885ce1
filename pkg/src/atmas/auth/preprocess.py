"""Clip, z-score and min-max scaling of factor columns.

Statistics come from training windows only. Per numeric column: clip to
the training 5th/95th percentiles, z-score with the raw training mean and
population standard deviation, then map the clipped z range onto [0, 1].
Service type is one-hot encoded and bypasses the numeric steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from atmas.scenario.dataset import FACTOR_COLUMNS, FactorVector

SERVICE_FACTOR = 2
N_SERVICES = 3


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PreprocessStats:
    active_factors: tuple[int, ...]
    raw_columns: tuple[int, ...]  # raw column index per numeric column
    clip_lo: np.ndarray
    clip_hi: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    z_lo: np.ndarray = field(repr=False)
    z_hi: np.ndarray = field(repr=False)

    @property
    def n_numeric(self) -> int:
        return len(self.raw_columns)

    @property
    def has_service(self) -> bool:
        return SERVICE_FACTOR in self.active_factors

    @property
    def n_features(self) -> int:
        return self.n_numeric + (N_SERVICES if self.has_service else 0)

    def to_dict(self) -> dict:
        return {
            "active_factors": list(self.active_factors),
            "raw_columns": list(self.raw_columns),
            **{k: getattr(self, k).tolist() for k in ("clip_lo", "clip_hi", "mean", "std", "z_lo", "z_hi")},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessStats":
        arrays = {k: np.asarray(d[k], dtype=np.float64) for k in ("clip_lo", "clip_hi", "mean", "std", "z_lo", "z_hi")}
        return cls(tuple(d["active_factors"]), tuple(d["raw_columns"]), **arrays)


def _numeric_columns(active_factors: Sequence[int]) -> tuple[int, ...]:
    return tuple(c for f in sorted(active_factors) if f != SERVICE_FACTOR for c in FACTOR_COLUMNS[f])


def _zscore(values: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    safe = np.where(std > 0, std, 1.0)
    return np.where(std > 0, (values - mean) / safe, 0.0)


def fit_preprocess(X_raw: np.ndarray, active_factors: Sequence[int]) -> PreprocessStats:
    X_raw = np.asarray(X_raw, dtype=np.float64)
    if X_raw.ndim != 2 or len(X_raw) < 2:
        raise PreprocessError("need at least two training windows")
    factors = tuple(sorted(set(active_factors)))
    if not factors or not set(factors) <= set(FACTOR_COLUMNS):
        raise PreprocessError(f"invalid active factor set {active_factors}")
    cols = _numeric_columns(factors)
    data = X_raw[:, cols]
    lo = np.percentile(data, 5, axis=0) if cols else np.zeros(0)
    hi = np.percentile(data, 95, axis=0) if cols else np.zeros(0)
    mean = data.mean(axis=0)
    std = data.std(axis=0)  # population
    return PreprocessStats(factors, cols, lo, hi, mean, std, _zscore(lo, mean, std), _zscore(hi, mean, std))


def apply_preprocess(stats: PreprocessStats, X_raw) -> np.ndarray:
    """Transform raw rows ``(n, 10)`` (or one :class:`FactorVector`) into model features."""
    if isinstance(X_raw, FactorVector):
        X_raw = X_raw.as_row()
    X_raw = np.asarray(X_raw, dtype=np.float64)
    single = X_raw.ndim == 1
    if single:
        X_raw = X_raw[None, :]
    v = np.clip(X_raw[:, stats.raw_columns], stats.clip_lo, stats.clip_hi)
    z = _zscore(v, stats.mean, stats.std)
    span = stats.z_hi - stats.z_lo
    scaled = np.where(span > 0, (z - stats.z_lo) / np.where(span > 0, span, 1.0), 0.5)
    parts = [scaled]
    if stats.has_service:
        codes = X_raw[:, FACTOR_COLUMNS[SERVICE_FACTOR][0]].astype(np.int64)
        onehot = np.zeros((len(X_raw), N_SERVICES))
        valid = (codes >= 0) & (codes < N_SERVICES)
        onehot[np.nonzero(valid)[0], codes[valid]] = 1.0
        parts.insert(0, onehot)
    out = np.hstack(parts)
    return out[0] if single else out
