"""Satellite beam and base-station geometry.

Ground distances use a flat local tangent plane (km); only the satellite
elevation and footprint use a spherical Earth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from atmas.config import GeometryConfig


class GeometryError(ValueError):
    pass


class BeamOutOfRange(GeometryError):
    """Site lies outside the satellite beam footprint."""


class BeamMissesEarth(GeometryError):
    """Nadir half-angle too wide for the beam edge to intersect the Earth."""


class NoCoverage(GeometryError):
    """No base station within coverage range."""


@dataclass(frozen=True)
class Geometry:
    earth_radius_km: float = 6371.0
    satellite_altitude_km: float = 20000.0
    beam_half_angle_deg: float = 11.64
    bs_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    bs_coverage_km: float = 20.0
    subsatellite_point_km: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.satellite_altitude_km <= 0:
            raise GeometryError("altitude must be > 0")
        if not 0 < self.beam_half_angle_deg < 90:
            raise GeometryError("beam half-angle must lie in (0, 90) degrees")
        if self.bs_coverage_km <= 0:
            raise GeometryError("BS coverage must be > 0")
        bs = np.asarray(self.bs_positions, dtype=np.float64).reshape(-1, 2)
        bs.setflags(write=False)
        object.__setattr__(self, "bs_positions", bs)

    @classmethod
    def from_config(cls, cfg: GeometryConfig) -> "Geometry":
        half = cfg.region_km / 2.0
        # lattice reaches past the region so every in-region point is served
        margin = cfg.bs_pitch_km
        bs = hex_lattice(-half - margin, half + margin, cfg.bs_pitch_km)
        return cls(
            earth_radius_km=cfg.earth_radius_km,
            satellite_altitude_km=cfg.altitude_km,
            beam_half_angle_deg=cfg.beam_half_angle_deg,
            bs_positions=bs,
            bs_coverage_km=cfg.bs_coverage_km,
            subsatellite_point_km=tuple(cfg.subsatellite_point_km),
        )


def hex_lattice(lo: float, hi: float, pitch: float) -> np.ndarray:
    """Hexagonal lattice points with nearest-neighbour spacing ``pitch`` in ``[lo, hi]^2``.

    Ordered row by row (south to north, west to east), which fixes BS indices.
    """
    row_h = pitch * math.sqrt(3) / 2
    pts = []
    n_rows = int(math.floor((hi - lo) / row_h)) + 1
    for r in range(n_rows):
        y = lo + r * row_h
        x = lo + (pitch / 2 if r % 2 else 0.0)
        while x <= hi + 1e-9:
            pts.append((x, y))
            x += pitch
    return np.array(pts, dtype=np.float64)


def footprint_central_angle_deg(geometry: Geometry) -> float:
    """Earth central angle from the subsatellite point to the beam edge.

    Law of sines in the triangle (Earth centre, satellite, edge site): the
    angle at the site is obtuse for the near-side intersection.
    """
    R = geometry.earth_radius_km
    h = geometry.satellite_altitude_km
    eta = math.radians(geometry.beam_half_angle_deg)
    s = (R + h) * math.sin(eta) / R
    if s > 1.0:
        raise BeamMissesEarth(f"(R+h)·sin(η)/R = {s:.4f} > 1")
    site = math.pi - math.asin(s)
    return math.degrees(math.pi - eta - site)


def beam_footprint_radius(geometry: Geometry) -> float:
    """Great-circle radius (km) of the beam footprint."""
    return geometry.earth_radius_km * math.radians(footprint_central_angle_deg(geometry))


def elevation_from_central_angle(psi_deg, earth_radius_km: float, altitude_km: float):
    """Elevation (deg) of the satellite seen from a site at central angle ``psi`` off nadir."""
    psi = np.radians(psi_deg)
    ratio = earth_radius_km / (earth_radius_km + altitude_km)
    return np.degrees(np.arctan2(np.cos(psi) - ratio, np.sin(psi)))


def compute_elevation(geometry: Geometry, site_km, subsatellite_point_km=None):
    """Elevation angle (deg) at ``site_km`` (shape ``(2,)`` or ``(n, 2)``).

    Raises :class:`BeamOutOfRange` if any site falls outside the footprint.
    """
    sub = np.asarray(
        geometry.subsatellite_point_km if subsatellite_point_km is None else subsatellite_point_km,
        dtype=np.float64,
    )
    site = np.asarray(site_km, dtype=np.float64)
    ground = np.hypot(*(site - sub).T)
    psi = np.degrees(ground / geometry.earth_radius_km)
    edge = footprint_central_angle_deg(geometry)
    if np.any(psi > edge * (1 + 1e-12)):
        raise BeamOutOfRange(f"central angle {np.max(psi):.3f}° exceeds footprint edge {edge:.3f}°")
    elev = elevation_from_central_angle(psi, geometry.earth_radius_km, geometry.satellite_altitude_km)
    return float(elev) if np.ndim(elev) == 0 else elev


def in_beam(geometry: Geometry, site_km) -> bool:
    sub = np.asarray(geometry.subsatellite_point_km, dtype=np.float64)
    ground = float(np.hypot(*(np.asarray(site_km, dtype=np.float64) - sub)))
    return ground <= beam_footprint_radius(geometry)


def assign_bs(geometry: Geometry, position_km) -> tuple[int, float]:
    """Nearest BS ``(index, distance_km)``; the lower index wins exact ties."""
    bs = geometry.bs_positions
    if len(bs) == 0:
        raise GeometryError("no base stations configured")
    d = np.hypot(bs[:, 0] - position_km[0], bs[:, 1] - position_km[1])
    i = int(np.argmin(d))
    if d[i] > geometry.bs_coverage_km:
        raise NoCoverage(f"nearest BS {i} is {d[i]:.2f} km away")
    return i, float(d[i])


def assign_bs_many(geometry: Geometry, positions_km: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`assign_bs` without the coverage check."""
    bs = geometry.bs_positions
    p = np.asarray(positions_km, dtype=np.float64)
    d = np.hypot(p[:, None, 0] - bs[None, :, 0], p[:, None, 1] - bs[None, :, 1])
    idx = np.argmin(d, axis=1)
    return idx, d[np.arange(len(p)), idx]
