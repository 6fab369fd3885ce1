import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atmas.config import GeometryConfig
from atmas.scenario.geometry import (
    BeamMissesEarth,
    BeamOutOfRange,
    Geometry,
    GeometryError,
    NoCoverage,
    assign_bs,
    assign_bs_many,
    beam_footprint_radius,
    compute_elevation,
    elevation_from_central_angle,
    footprint_central_angle_deg,
    hex_lattice,
    in_beam,
)

# independent high-precision oracle values (mpmath, 40 digits)
ELEV_PSI_10 = 76.84909249499079
PSI_EDGE = 44.99012491162917
RADIUS_EDGE = 5002.673639278140
ELEV_EDGE = 33.36987508837083


@pytest.fixture
def geo():
    return Geometry()


class TestElevation:
    def test_nadir(self, geo):
        assert compute_elevation(geo, (0.0, 0.0)) == pytest.approx(90.0, abs=1e-9)

    def test_psi_10(self, geo):
        site = (6371.0 * math.radians(10.0), 0.0)
        assert compute_elevation(geo, site) == pytest.approx(ELEV_PSI_10, abs=1e-9)

    def test_edge_matches_law_of_sines(self, geo):
        assert elevation_from_central_angle(PSI_EDGE, 6371.0, 20000.0) == pytest.approx(ELEV_EDGE, abs=1e-9)

    def test_outside_footprint(self, geo):
        with pytest.raises(BeamOutOfRange):
            compute_elevation(geo, (RADIUS_EDGE + 1.0, 0.0))

    def test_vectorized(self, geo):
        sites = np.array([[0.0, 0.0], [0.0, 1000.0], [3000.0, 0.0]])
        elev = compute_elevation(geo, sites)
        assert elev.shape == (3,)
        assert elev[0] > elev[1] > elev[2]

    def test_subsatellite_offset(self):
        g = Geometry(subsatellite_point_km=(500.0, 0.0))
        assert compute_elevation(g, (500.0, 0.0)) == pytest.approx(90.0, abs=1e-9)

    @given(st.floats(0.0, PSI_EDGE), st.floats(0.0, PSI_EDGE))
    def test_monotone_in_central_angle(self, a, b):
        lo, hi = sorted((a, b))
        e_lo = elevation_from_central_angle(lo, 6371.0, 20000.0)
        e_hi = elevation_from_central_angle(hi, 6371.0, 20000.0)
        assert e_hi <= e_lo + 1e-12
        assert ELEV_EDGE - 1e-9 <= e_hi <= 90.0 + 1e-9


class TestFootprint:
    def test_law_of_sines_oracle(self, geo):
        assert footprint_central_angle_deg(geo) == pytest.approx(PSI_EDGE, rel=1e-9)
        assert beam_footprint_radius(geo) == pytest.approx(RADIUS_EDGE, rel=1e-6)
        assert beam_footprint_radius(geo) == pytest.approx(6371.0 * math.radians(PSI_EDGE), rel=1e-12)

    def test_narrow_beam_limit(self):
        assert beam_footprint_radius(Geometry(beam_half_angle_deg=1e-6)) < 0.01

    def test_beam_misses_earth(self):
        with pytest.raises(BeamMissesEarth):
            beam_footprint_radius(Geometry(beam_half_angle_deg=80.0))

    @pytest.mark.parametrize("kw", [{"satellite_altitude_km": 0}, {"beam_half_angle_deg": 90}, {"bs_coverage_km": 0}])
    def test_invalid_geometry(self, kw):
        with pytest.raises(GeometryError):
            Geometry(**kw)

    def test_in_beam(self, geo):
        assert in_beam(geo, (0.0, 0.0))
        assert not in_beam(geo, (RADIUS_EDGE + 1.0, 0.0))


class TestBaseStations:
    def test_nearest(self):
        bs = np.array([[100.0, 0.0], [0.0, 100.0], [50.0, 50.0], [5.0, 0.0]])
        g = Geometry(bs_positions=bs)
        idx, d = assign_bs(g, (0.0, 0.0))
        assert (idx, d) == (3, 5.0)

    def test_no_coverage(self):
        g = Geometry(bs_positions=np.array([[25.0, 0.0], [0.0, -25.0]]))
        with pytest.raises(NoCoverage):
            assign_bs(g, (0.0, 0.0))

    def test_tie_lower_index(self):
        g = Geometry(bs_positions=np.array([[10.0, 0.0], [-10.0, 0.0]]))
        assert assign_bs(g, (0.0, 0.0)) == (0, 10.0)
        idx, _ = assign_bs_many(g, np.array([[0.0, 0.0]]))
        assert idx[0] == 0

    def test_no_stations(self, geo):
        with pytest.raises(GeometryError):
            assign_bs(geo, (0.0, 0.0))

    def test_hex_lattice_spacing(self):
        pts = hex_lattice(-30.0, 30.0, 20.0)
        d = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
        np.fill_diagonal(d, np.inf)
        assert d.min() == pytest.approx(20.0)
        assert np.allclose(d.min(axis=1), 20.0)

    def test_default_lattice_serves_region(self):
        cfg = GeometryConfig()
        g = Geometry.from_config(cfg)
        half = cfg.region_km / 2
        grid = np.stack(np.meshgrid(np.linspace(-half, half, 41), np.linspace(-half, half, 41)), -1).reshape(-1, 2)
        _, dist = assign_bs_many(g, grid)
        assert dist.max() <= cfg.bs_coverage_km

    @given(st.floats(-50, 50), st.floats(-50, 50))
    def test_many_matches_single(self, x, y):
        g = Geometry.from_config(GeometryConfig())
        idx, dist = assign_bs_many(g, np.array([[x, y]]))
        assert (int(idx[0]), float(dist[0])) == assign_bs(g, (x, y))
