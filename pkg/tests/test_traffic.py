import numpy as np
import pytest

from atmas.config import TrafficConfig
from atmas.scenario.traffic import ServiceType, TrafficProfile, expected_volume, generate_traffic

N_DRAWS = 10_000


class TestTraffic:
    @pytest.mark.parametrize(
        "service,rel", [(ServiceType.Conversational, 0.01), (ServiceType.Streaming, 0.03), (ServiceType.Interactive, 0.1)]
    )
    def test_sample_mean(self, service, rel):
        cfg = TrafficConfig()
        rng = np.random.default_rng(17)
        vols = [generate_traffic(service, 30, rng, cfg)[0] for _ in range(N_DRAWS)]
        assert np.mean(vols) == pytest.approx(expected_volume(service, 30, cfg), rel=rel)

    def test_conversational_default_volume(self):
        # constant-rate model: rate * window
        assert expected_volume(ServiceType.Conversational, 30, TrafficConfig()) == 60_000.0

    def test_zero_window(self, rng):
        assert generate_traffic(ServiceType.Streaming, 0, rng) == (0.0, 0.0)

    def test_seeded(self):
        a = [generate_traffic(s, 30, np.random.default_rng(1)) for s in ServiceType]
        b = [generate_traffic(s, 30, np.random.default_rng(1)) for s in ServiceType]
        assert a == b

    def test_uplink_never_exceeds_volume_rate(self, rng):
        for _ in range(500):
            s = ServiceType(int(rng.integers(3)))
            vol, up = generate_traffic(s, 30, rng)
            assert vol >= 0 and 0 <= up <= vol / 30 + 1e-9

    def test_scale(self):
        base = generate_traffic(ServiceType.Conversational, 30, np.random.default_rng(2))[0]
        scaled = generate_traffic(ServiceType.Conversational, 30, np.random.default_rng(2), scale=2.0)[0]
        assert scaled == pytest.approx(2 * base)

    def test_shifted_profile(self):
        p = TrafficProfile((1.0, 0.0, 0.0)).shifted(0.4)
        assert p.service_mix == pytest.approx((0.6, 0.4, 0.0))
        assert p.scale == pytest.approx(1.4)
