"""Per-service traffic models for one observation window.

Conversational: constant rate with Gaussian jitter.
Streaming: on/off bursts with exponential on/off durations.
Interactive: Poisson request arrivals with Pareto-tailed sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from atmas.config import TrafficConfig


class ServiceType(IntEnum):
    Conversational = 0
    Streaming = 1
    Interactive = 2


@dataclass(frozen=True)
class TrafficProfile:
    service_mix: tuple[float, float, float]
    scale: float = 1.0

    def shifted(self, divergence: float) -> "TrafficProfile":
        """Spoofer variant: mix rotated toward other services, volumes scaled by ``1 + divergence``."""
        mix = np.asarray(self.service_mix)
        rolled = np.roll(mix, 1)
        new = (1 - divergence) * mix + divergence * rolled
        return TrafficProfile(service_mix=tuple(float(v) for v in new / new.sum()), scale=self.scale * (1 + divergence))


def expected_volume(service: ServiceType, window_s: float, cfg: TrafficConfig) -> float:
    """Analytic mean bytes per window (the sample-mean tests check against this)."""
    if service == ServiceType.Conversational:
        return cfg.conversational_rate_Bps * window_s
    if service == ServiceType.Streaming:
        duty = cfg.streaming_on_mean_s / (cfg.streaming_on_mean_s + cfg.streaming_off_mean_s)
        return cfg.streaming_on_rate_Bps * duty * window_s
    a = cfg.interactive_pareto_shape
    mean_size = a * cfg.interactive_pareto_scale_B / (a - 1)
    return cfg.interactive_arrival_per_s * window_s * mean_size


def _volume(service: ServiceType, window_s: float, rng: np.random.Generator, cfg: TrafficConfig) -> float:
    if service == ServiceType.Conversational:
        rate = cfg.conversational_rate_Bps * (1 + cfg.conversational_cv * rng.standard_normal())
        return max(rate, 0.0) * window_s
    if service == ServiceType.Streaming:
        on_mean, off_mean = cfg.streaming_on_mean_s, cfg.streaming_off_mean_s
        # start in the stationary on/off state
        on = rng.random() < on_mean / (on_mean + off_mean)
        t = 0.0
        on_time = 0.0
        while t < window_s:
            d = rng.exponential(on_mean if on else off_mean)
            d = min(d, window_s - t)
            if on:
                on_time += d
            t += d
            on = not on
        return cfg.streaming_on_rate_Bps * on_time
    n = rng.poisson(cfg.interactive_arrival_per_s * window_s)
    if n == 0:
        return 0.0
    sizes = cfg.interactive_pareto_scale_B * (1.0 + rng.pareto(cfg.interactive_pareto_shape, size=n))
    return float(sizes.sum())


def generate_traffic(
    service: ServiceType,
    window_s: float,
    rng: np.random.Generator,
    cfg: TrafficConfig | None = None,
    scale: float = 1.0,
) -> tuple[float, float]:
    """``(volume_bytes, uplink_rate_Bps)`` for one window of ``service``."""
    cfg = cfg or TrafficConfig()
    if window_s <= 0:
        return 0.0, 0.0
    service = ServiceType(service)
    volume = scale * _volume(service, window_s, rng, cfg)
    share = cfg.uplink_share[service] * rng.lognormal(0.0, cfg.uplink_noise_sigma)
    uplink = min(share, 1.0) * volume / window_s
    return volume, uplink
