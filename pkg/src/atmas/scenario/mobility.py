"""Waypoint mobility and trajectory-derived factors (sinuosity, heading)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from atmas import kernels

SINUOSITY_CAP = 100.0
MIN_CHORD_KM = 0.001


@dataclass(frozen=True)
class MobilityProfile:
    home_km: tuple[float, float]
    roam_radius_km: float
    speed_mean_kmh: float
    speed_std_kmh: float
    turn_std_deg: float
    bounds_km: tuple[float, float] = (-50.0, 50.0)
    heading_corr: float = 0.0

    def shifted(self, divergence: float, direction_rad: float, home_shift: float = 1.0) -> "MobilityProfile":
        """Spoofer variant: speed and turn rate scaled by ``1 + divergence``.

        The home point moves ``home_shift * divergence * roam_radius`` km
        along ``direction_rad``.
        """
        d = home_shift * divergence * self.roam_radius_km
        hx = self.home_km[0] + d * math.sin(direction_rad)
        hy = self.home_km[1] + d * math.cos(direction_rad)
        lo, hi = self.bounds_km
        return MobilityProfile(
            home_km=(min(max(hx, lo), hi), min(max(hy, lo), hi)),
            roam_radius_km=self.roam_radius_km,
            speed_mean_kmh=self.speed_mean_kmh * (1 + divergence),
            speed_std_kmh=self.speed_std_kmh * (1 + divergence),
            turn_std_deg=self.turn_std_deg * (1 + divergence),
            bounds_km=self.bounds_km,
            heading_corr=self.heading_corr,
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray  # seconds, strictly increasing
    positions: np.ndarray  # (n, 2) km
    speed: np.ndarray  # km/h, >= 0

    def __len__(self) -> int:
        return len(self.t)


def generate_trajectory(
    profile: MobilityProfile,
    duration_s: float,
    rng: np.random.Generator,
    dt_s: float = 1.0,
    start_km: tuple[float, float] | None = None,
) -> Trajectory:
    """Waypoint motion inside the profile's roaming disc, sampled every ``dt_s``.

    Raw draws are made here so both kernel backends consume identical inputs.
    """
    if duration_s <= 0:
        raise ValueError("duration must be > 0")
    n = int(round(duration_s / dt_s))
    speeds = np.maximum(rng.normal(profile.speed_mean_kmh, profile.speed_std_kmh, size=n), 0.0)
    rho = profile.heading_corr
    # innovations scaled so the stationary heading offset has std turn_std_deg
    sigma = math.radians(profile.turn_std_deg) * math.sqrt(1.0 - rho * rho)
    noise = rng.normal(0.0, sigma, size=n) if sigma > 0 else np.zeros(n)
    # waypoint legs last minutes, so n/10 + 16 draws is never exhausted in practice
    draws = rng.random((n // 10 + 16, 2))
    if start_km is None:
        start_km = profile.home_km
    lo, hi = profile.bounds_km
    pos = kernels.waypoint_walk(
        float(start_km[0]), float(start_km[1]),
        float(profile.home_km[0]), float(profile.home_km[1]),
        float(profile.roam_radius_km), float(lo), float(hi), float(dt_s),
        speeds, noise, draws, rho,
    )
    t = np.arange(n + 1, dtype=np.float64) * dt_s
    speed = np.concatenate([[0.0], speeds])
    return Trajectory(t=t, positions=pos, speed=speed)


def compute_sinuosity(points) -> float:
    """Path length over chord, 1.0 for fewer than two points or no motion, capped at 100."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(p) < 2:
        return 1.0
    return float(sinuosity_windows(p[None, :, :])[0])


def sinuosity_windows(windows: np.ndarray) -> np.ndarray:
    """Vectorized sinuosity for an ``(n_windows, n_points, 2)`` array."""
    seg = np.diff(windows, axis=1)
    length = np.hypot(seg[..., 0], seg[..., 1]).sum(axis=1)
    disp = windows[:, -1] - windows[:, 0]
    chord = np.hypot(disp[:, 0], disp[:, 1])
    out = np.full(len(windows), SINUOSITY_CAP)
    moving = chord >= MIN_CHORD_KM
    out[moving] = np.minimum(length[moving] / chord[moving], SINUOSITY_CAP)
    out[length == 0.0] = 1.0
    return np.maximum(out, 1.0)


def compute_heading_azimuth(prev, curr, previous_heading: float | None = None) -> float:
    """Clockwise angle from north (+y) in ``[0, 360)``.

    Identical points carry ``previous_heading`` forward (0 if there is none).
    """
    dx = float(curr[0]) - float(prev[0])
    dy = float(curr[1]) - float(prev[1])
    if dx == 0.0 and dy == 0.0:
        return 0.0 if previous_heading is None else previous_heading
    h = math.degrees(math.atan2(dx, dy)) % 360.0
    return 0.0 if h >= 360.0 else h


def heading_windows(first: np.ndarray, last: np.ndarray) -> np.ndarray:
    """Vectorized net heading per window with carry-forward for stationary windows."""
    d = last - first
    still = (d[:, 0] == 0.0) & (d[:, 1] == 0.0)
    h = np.degrees(np.arctan2(d[:, 0], d[:, 1])) % 360.0
    if still.any():
        prev = 0.0
        for i in range(len(h)):
            if still[i]:
                h[i] = prev
            prev = h[i]
    # % 360 can round a tiny negative angle up to exactly 360.0
    h[h >= 360.0] = 0.0
    return h
