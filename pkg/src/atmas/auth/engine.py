"""NCC-side continuous authentication: enrollment, model registry, window decisions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from atmas.auth.forest import ForestModel, train_forest
from atmas.common import SecurityLevel
from atmas.config import AuthConfig, ForestConfig
from atmas.scenario.dataset import ALL_FACTORS, FactorVector, Streams

MODEL_MAGIC = "ATMAS-MODEL"
MODEL_FORMAT_VERSION = 1


class EnrollmentDataInsufficient(ValueError):
    pass


class ModelMissing(KeyError):
    pass


class ModelFormatError(ValueError):
    pass


class Verdict(str, Enum):
    Grant = "Grant"
    Deny = "Deny"


@dataclass(frozen=True)
class AuthDecision:
    mu_id: str
    window: int
    spoof_score: float
    verdict: Verdict
    threshold: float


def decision_threshold(level: SecurityLevel | str, cfg: AuthConfig | None = None) -> float:
    cfg = cfg or AuthConfig()
    level = SecurityLevel(level)
    return {
        SecurityLevel.Low: cfg.threshold_low,
        SecurityLevel.Medium: cfg.threshold_medium,
        SecurityLevel.High: cfg.threshold_high,
    }[level]


def decide(spoof_score: float, threshold: float) -> Verdict:
    # a score exactly at the threshold is granted
    return Verdict.Deny if spoof_score > threshold else Verdict.Grant


class ModelRegistry:
    """Per-MU forests keyed by unique id, each with a monotonically increasing version."""

    def __init__(self):
        self._models: dict[str, ForestModel] = {}

    def __contains__(self, mu_id: str) -> bool:
        return mu_id in self._models

    def __len__(self) -> int:
        return len(self._models)

    def get(self, mu_id: str) -> ForestModel:
        try:
            return self._models[mu_id]
        except KeyError:
            raise ModelMissing(mu_id) from None

    def put(self, mu_id: str, model: ForestModel) -> ForestModel:
        prior = self._models.get(mu_id)
        model.version = prior.version + 1 if prior is not None else 1
        self._models[mu_id] = model
        return model

    def save(self, directory: str | Path) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for mu_id in sorted(self._models):
            path = directory / f"{mu_id}.model.json"
            save_model(self._models[mu_id], path, mu_id)
            paths.append(path)
        return paths

    @classmethod
    def load(cls, directory: str | Path) -> "ModelRegistry":
        reg = cls()
        for path in sorted(Path(directory).glob("*.model.json")):
            mu_id, model = load_model(path)
            reg._models[mu_id] = model
        return reg


def save_model(model: ForestModel, path: str | Path, mu_id: str) -> None:
    doc = {"magic": MODEL_MAGIC, "format_version": MODEL_FORMAT_VERSION, "mu_id": mu_id, "model": model.to_dict()}
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path: str | Path) -> tuple[str, ForestModel]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
    if doc.get("magic") != MODEL_MAGIC:
        raise ModelFormatError(f"{path} is not a model file")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {doc.get('format_version')}")
    return doc["mu_id"], ForestModel.from_dict(doc["model"])


def enrollment_negatives(streams: Streams, mu: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Negatives for a fresh MU: other MUs' legitimate windows plus the adversary profile.

    Half of the windows come from the population, half from the MU's spoofer
    stream (rounded toward the spoofer).
    """
    others = [streams.legit[j] for j in range(streams.n_mu) if j != mu]
    n_pop = n // 2 if others else 0
    parts = []
    if n_pop:
        pool = np.concatenate(others)
        parts.append(pool[rng.choice(len(pool), size=n_pop, replace=len(pool) < n_pop)])
    spoof = streams.spoof[mu]
    n_adv = n - n_pop
    parts.append(spoof[rng.choice(len(spoof), size=n_adv, replace=len(spoof) < n_adv)])
    return np.concatenate(parts)


def enroll(
    registry: ModelRegistry,
    mu_id: str,
    legitimate: np.ndarray,
    negatives: np.ndarray,
    hyperparams: ForestConfig | None = None,
    rng: np.random.Generator | int | None = None,
    *,
    min_windows: int = 200,
    active_factors: Sequence[int] = ALL_FACTORS,
) -> ForestModel:
    legitimate = np.asarray(legitimate, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64)
    if len(legitimate) < min_windows:
        raise EnrollmentDataInsufficient(f"{mu_id}: {len(legitimate)} legitimate windows < minimum {min_windows}")
    X = np.concatenate([legitimate, negatives])
    y = np.concatenate([np.zeros(len(legitimate), np.int8), np.ones(len(negatives), np.int8)])
    model = train_forest(X, y, active_factors, hyperparams, rng)
    return registry.put(mu_id, model)


def authenticate_window(
    registry: ModelRegistry,
    mu_id: str,
    factors: FactorVector | np.ndarray,
    security_level: SecurityLevel | str,
    window: int = 0,
    cfg: AuthConfig | None = None,
) -> AuthDecision:
    model = registry.get(mu_id)
    row = factors.as_row() if isinstance(factors, FactorVector) else np.asarray(factors, dtype=np.float64)
    score = float(model.score(row))
    thr = decision_threshold(security_level, cfg)
    return AuthDecision(mu_id, window, score, decide(score, thr), thr)
