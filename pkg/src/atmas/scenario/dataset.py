"""Synthetic per-MU factor streams and labeled datasets.

Every MU gets a legitimate profile and a spoofer profile (the same identity
driven by someone else, shifted by the divergence knob). Both are simulated
for the full horizon; a dataset with a given illegal fraction swaps a
seeded subset of legitimate windows for spoof windows. Streams are shared
across illegal fractions for one seed, so sweeps compare like with like.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from atmas.config import ScenarioConfig
from atmas.scenario.geometry import Geometry, assign_bs_many, compute_elevation
from atmas.scenario.mobility import (
    MobilityProfile,
    generate_trajectory,
    heading_windows,
    sinuosity_windows,
)
from atmas.scenario.traffic import ServiceType, TrafficProfile, generate_traffic

RAW_COLUMNS = ("f1", "f2", "f3", "f4", "f5", "f6", "f7_x", "f7_y", "f8", "f9")
# factor number -> raw column indices (position is two columns)
FACTOR_COLUMNS = {1: (0,), 2: (1,), 3: (2,), 4: (3,), 5: (4,), 6: (5,), 7: (6, 7), 8: (8,), 9: (9,)}
ALL_FACTORS = tuple(range(1, 10))


class Label(IntEnum):
    Legitimate = 0
    Spoof = 1


@dataclass(frozen=True)
class FactorVector:
    f1_traffic_volume: float
    f2_service_type: ServiceType
    f3_uplink_rate: float
    f4_sinuosity: float
    f5_bs_index: int
    f6_bs_distance_km: float
    f7_position: tuple[float, float]
    f8_heading_azimuth_deg: float
    f9_elevation_deg: float

    def as_row(self) -> np.ndarray:
        return np.array(
            [
                self.f1_traffic_volume, int(self.f2_service_type), self.f3_uplink_rate,
                self.f4_sinuosity, self.f5_bs_index, self.f6_bs_distance_km,
                self.f7_position[0], self.f7_position[1],
                self.f8_heading_azimuth_deg, self.f9_elevation_deg,
            ],
            dtype=np.float64,
        )

    @classmethod
    def from_row(cls, row) -> "FactorVector":
        r = [float(v) for v in row]
        return cls(r[0], ServiceType(int(r[1])), r[2], r[3], int(r[4]), r[5], (r[6], r[7]), r[8], r[9])


@dataclass(frozen=True)
class LabeledWindow:
    mu_id: int
    window_index: int
    factors: FactorVector
    label: Label


@dataclass(frozen=True)
class UserProfile:
    mobility: MobilityProfile
    traffic: TrafficProfile


@dataclass(eq=False)
class Dataset:
    """Column-oriented labeled windows; indexing yields :class:`LabeledWindow`."""

    mu: np.ndarray
    window: np.ndarray
    X: np.ndarray  # (n, 10) raw factor columns in RAW_COLUMNS order
    y: np.ndarray  # int8 labels

    def __len__(self) -> int:
        return len(self.y)

    def __getitem__(self, i: int) -> LabeledWindow:
        return LabeledWindow(int(self.mu[i]), int(self.window[i]), FactorVector.from_row(self.X[i]), Label(int(self.y[i])))

    def __iter__(self) -> Iterator[LabeledWindow]:
        return (self[i] for i in range(len(self)))

    def subset(self, mask_or_idx) -> "Dataset":
        return Dataset(self.mu[mask_or_idx], self.window[mask_or_idx], self.X[mask_or_idx], self.y[mask_or_idx])

    def for_mu(self, mu: int) -> "Dataset":
        return self.subset(self.mu == mu)

    @classmethod
    def empty(cls) -> "Dataset":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, len(RAW_COLUMNS))), np.zeros(0, np.int8))

    @classmethod
    def concat(cls, parts: Sequence["Dataset"]) -> "Dataset":
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.mu for p in parts]),
            np.concatenate([p.window for p in parts]),
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.y for p in parts]),
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mu_id", "window", *RAW_COLUMNS, "label"])
            for i in range(len(self)):
                x = self.X[i]
                w.writerow(
                    [int(self.mu[i]), int(self.window[i]), repr(float(x[0])), int(x[1]), repr(float(x[2])),
                     repr(float(x[3])), int(x[4]), *(repr(float(v)) for v in x[5:]), int(self.y[i])]
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header != ["mu_id", "window", *RAW_COLUMNS, "label"]:
            raise ValueError(f"unexpected dataset header {header}")
        arr = np.array(body, dtype=np.float64).reshape(-1, len(header))
        return cls(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2:-1].copy(), arr[:, -1].astype(np.int8))


@dataclass(eq=False)
class Streams:
    """Full-horizon legitimate and spoof factor matrices per MU."""

    legit: list[np.ndarray]
    spoof: list[np.ndarray]
    profiles: list[UserProfile]
    spoof_profiles: list[UserProfile]
    order_seeds: list[np.random.SeedSequence]

    @property
    def n_mu(self) -> int:
        return len(self.legit)


def draw_user(cfg: ScenarioConfig, rng: np.random.Generator) -> UserProfile:
    m, tr = cfg.mobility, cfg.traffic
    half = cfg.geometry.region_km / 2
    r = m.home_spread_km * math.sqrt(rng.random())
    th = 2 * math.pi * rng.random()
    home = (min(max(r * math.sin(th), -half), half), min(max(r * math.cos(th), -half), half))
    speed = float(rng.uniform(*m.speed_mean_kmh))
    mobility = MobilityProfile(
        home_km=home,
        roam_radius_km=m.roam_radius_km,
        speed_mean_kmh=speed,
        speed_std_kmh=m.speed_cv * speed,
        turn_std_deg=float(rng.uniform(*m.turn_std_deg)),
        bounds_km=(-half, half),
        heading_corr=m.heading_corr,
    )
    mix = rng.dirichlet(np.full(3, tr.mix_concentration))
    traffic = TrafficProfile(service_mix=tuple(float(v) for v in mix), scale=float(rng.lognormal(0.0, tr.user_scale_sigma)))
    return UserProfile(mobility, traffic)


def spoofer_of(profile: UserProfile, divergence: float, rng: np.random.Generator, home_shift: float = 1.0) -> UserProfile:
    direction = 2 * math.pi * rng.random()
    return UserProfile(profile.mobility.shifted(divergence, direction, home_shift), profile.traffic.shifted(divergence))


def simulate_windows(
    cfg: ScenarioConfig, geometry: Geometry, profile: UserProfile, n_windows: int, rng: np.random.Generator
) -> np.ndarray:
    """Raw factor matrix ``(n_windows, 10)`` for one profile over consecutive windows."""
    ds = cfg.dataset
    if n_windows == 0:
        return np.zeros((0, len(RAW_COLUMNS)))
    steps = ds.window_s * ds.sample_hz
    traj = generate_trajectory(profile.mobility, n_windows * ds.window_s, rng, dt_s=1.0 / ds.sample_hz)
    idx = np.arange(n_windows)[:, None] * steps + np.arange(steps + 1)[None, :]
    win = traj.positions[idx]  # (n_windows, steps + 1, 2)
    last = win[:, -1]

    services = rng.choice(3, size=n_windows, p=np.asarray(profile.traffic.service_mix))
    vol = np.empty(n_windows)
    up = np.empty(n_windows)
    for i, s in enumerate(services):
        vol[i], up[i] = generate_traffic(ServiceType(int(s)), ds.window_s, rng, cfg.traffic, profile.traffic.scale)

    bs_idx, bs_dist = assign_bs_many(geometry, last)
    bs_elev = compute_elevation(geometry, geometry.bs_positions)
    out = np.empty((n_windows, len(RAW_COLUMNS)))
    out[:, 0] = vol
    out[:, 1] = services
    out[:, 2] = up
    out[:, 3] = sinuosity_windows(win)
    out[:, 4] = bs_idx
    out[:, 5] = bs_dist
    out[:, 6:8] = last
    out[:, 8] = heading_windows(win[:, 0], last)
    out[:, 9] = np.asarray(bs_elev)[bs_idx]
    return out


def generate_streams(cfg: ScenarioConfig, seed: int | None = None, n_mu: int | None = None, n_windows: int | None = None) -> Streams:
    seed = cfg.seed if seed is None else seed
    n_mu = cfg.dataset.n_mu if n_mu is None else n_mu
    n_windows = cfg.dataset.n_windows if n_windows is None else n_windows
    geometry = Geometry.from_config(cfg.geometry)
    root = np.random.SeedSequence(seed)
    pop_ss, *mu_ss = root.spawn(n_mu + 1)
    pop_rng = np.random.default_rng(pop_ss)
    legit, spoof, profiles, spoofers, order = [], [], [], [], []
    for ss in mu_ss:
        prof_ss, legit_ss, spoof_ss, order_ss = ss.spawn(4)
        prof_rng = np.random.default_rng(prof_ss)
        profile = draw_user(cfg, pop_rng)
        spoofer = spoofer_of(profile, cfg.dataset.divergence, prof_rng, cfg.mobility.spoof_home_shift)
        legit.append(simulate_windows(cfg, geometry, profile, n_windows, np.random.default_rng(legit_ss)))
        spoof.append(simulate_windows(cfg, geometry, spoofer, n_windows, np.random.default_rng(spoof_ss)))
        profiles.append(profile)
        spoofers.append(spoofer)
        order.append(order_ss)
    return Streams(legit, spoof, profiles, spoofers, order)


def mix_streams(streams: Streams, illegal_fraction: float) -> Dataset:
    """Replace ``round(fraction * n_windows)`` windows per MU with spoof windows."""
    if not 0 <= illegal_fraction <= 1:
        raise ValueError("illegal_fraction must lie in [0, 1]")
    parts = []
    for mu in range(streams.n_mu):
        legit = streams.legit[mu]
        n = len(legit)
        k = int(round(illegal_fraction * n))
        # one fixed permutation per MU: spoof sets are nested across fractions
        perm = np.random.default_rng(streams.order_seeds[mu]).permutation(n)
        y = np.zeros(n, dtype=np.int8)
        y[perm[:k]] = 1
        X = np.where(y[:, None] == 1, streams.spoof[mu], legit)
        parts.append(Dataset(np.full(n, mu, dtype=np.int64), np.arange(n, dtype=np.int64), X, y))
    return Dataset.concat(parts)


def generate_dataset(
    cfg: ScenarioConfig,
    n_mu: int | None = None,
    n_windows: int | None = None,
    illegal_fraction: float | None = None,
    seed: int | None = None,
) -> Dataset:
    fraction = cfg.dataset.illegal_fraction if illegal_fraction is None else illegal_fraction
    if not 0 <= fraction <= 1:
        raise ValueError("illegal_fraction must lie in [0, 1]")
    return mix_streams(generate_streams(cfg, seed, n_mu, n_windows), fraction)


def select_columns(X: np.ndarray, factors: Sequence[int]) -> np.ndarray:
    cols = [c for f in sorted(factors) for c in FACTOR_COLUMNS[f]]
    return X[:, cols]
