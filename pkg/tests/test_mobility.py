import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atmas import _pykernels
from atmas.scenario.mobility import (
    SINUOSITY_CAP,
    MobilityProfile,
    compute_heading_azimuth,
    compute_sinuosity,
    generate_trajectory,
    heading_windows,
    sinuosity_windows,
)

coords = st.floats(-100, 100, allow_nan=False)
points = st.lists(st.tuples(coords, coords), min_size=2, max_size=20)


def profile(**kw):
    base = dict(home_km=(0.0, 0.0), roam_radius_km=10.0, speed_mean_kmh=30.0, speed_std_kmh=5.0, turn_std_deg=10.0)
    base.update(kw)
    return MobilityProfile(**base)


class TestSinuosity:
    def test_right_angle(self):
        assert abs(compute_sinuosity([(0, 0), (1, 0), (1, 1)]) - math.sqrt(2)) <= 1e-12

    def test_collinear(self):
        assert compute_sinuosity([(0, 0), (1, 1), (2, 2), (5, 5)]) == pytest.approx(1.0, abs=1e-12)

    def test_closed_loop_capped(self):
        assert compute_sinuosity([(0, 0), (1, 0), (1, 1), (0, 0)]) == SINUOSITY_CAP

    def test_single_point_and_still(self):
        assert compute_sinuosity([(3, 4)]) == 1.0
        assert compute_sinuosity([(3, 4), (3, 4), (3, 4)]) == 1.0

    @given(points)
    def test_bounds(self, pts):
        s = compute_sinuosity(pts)
        assert 1.0 <= s <= SINUOSITY_CAP

    def test_windows_match_scalar(self, rng):
        w = rng.normal(size=(50, 31, 2))
        batch = sinuosity_windows(w)
        assert np.array_equal(batch, [compute_sinuosity(x) for x in w])


class TestHeading:
    @pytest.mark.parametrize(
        "curr,expected", [((0, 1), 0.0), ((1, 0), 90.0), ((0, -1), 180.0), ((-1, 0), 270.0), ((-1, -1), 225.0)]
    )
    def test_compass(self, curr, expected):
        assert compute_heading_azimuth((0, 0), curr) == pytest.approx(expected, abs=1e-12)

    def test_stationary_carries_previous(self):
        assert compute_heading_azimuth((1, 1), (1, 1), previous_heading=42.0) == 42.0
        assert compute_heading_azimuth((1, 1), (1, 1)) == 0.0

    @given(coords, coords, coords, coords)
    def test_range(self, a, b, c, d):
        h = compute_heading_azimuth((a, b), (c, d))
        assert 0.0 <= h < 360.0

    def test_windows_carry_forward(self):
        first = np.array([[0.0, 0.0], [0.0, 0.0], [2.0, 2.0]])
        last = np.array([[1.0, 0.0], [0.0, 0.0], [2.0, 3.0]])
        assert heading_windows(first, last).tolist() == [90.0, 90.0, 0.0]


class TestTrajectory:
    def test_zero_speed(self, rng):
        tr = generate_trajectory(profile(speed_mean_kmh=0.0, speed_std_kmh=0.0), 120, rng)
        assert np.all(tr.positions == tr.positions[0])

    def test_seeded(self):
        a = generate_trajectory(profile(), 600, np.random.default_rng(5))
        b = generate_trajectory(profile(), 600, np.random.default_rng(5))
        assert np.array_equal(a.positions, b.positions)

    def test_shape_and_time(self, rng):
        tr = generate_trajectory(profile(), 100, rng, dt_s=2.0)
        assert len(tr) == 51 and tr.positions.shape == (51, 2)
        assert np.all(np.diff(tr.t) > 0)
        assert np.all(tr.speed >= 0)

    def test_bounds_respected(self, rng):
        tr = generate_trajectory(profile(home_km=(48.0, 48.0), speed_mean_kmh=200.0), 3600, rng)
        assert tr.positions.min() >= -50.0 and tr.positions.max() <= 50.0

    def test_step_length_matches_speed(self, rng):
        tr = generate_trajectory(profile(turn_std_deg=0.0), 300, rng)
        step = np.hypot(*np.diff(tr.positions, axis=0).T)
        assert np.all(step <= tr.speed[1:] / 3600.0 + 1e-12)

    def test_invalid_duration(self, rng):
        with pytest.raises(ValueError):
            generate_trajectory(profile(), 0, rng)

    def test_spoofer_shift(self):
        p = profile()
        s = p.shifted(0.4, 0.0)
        assert s.speed_mean_kmh == pytest.approx(42.0)
        assert s.home_km == pytest.approx((0.0, 4.0))

    def test_pure_python_walk_matches_active_backend(self):
        rng = np.random.default_rng(9)
        n = 400
        args = (0.0, 0.0, 0.0, 0.0, 10.0, -50.0, 50.0, 1.0,
                np.maximum(rng.normal(30, 5, n), 0), rng.normal(0, 0.2, n), rng.random((n // 10 + 16, 2)), 0.3)
        from atmas import kernels

        assert np.array_equal(kernels.waypoint_walk(*args), _pykernels.waypoint_walk(*args))
