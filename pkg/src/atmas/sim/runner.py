"""Scenario assembly and the top-level ``run`` entry point."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from atmas.auth.engine import enroll, enrollment_negatives
from atmas.common import SecurityLevel
from atmas.config import ConfigError, MUSpec, ScenarioConfig
from atmas.crypto import FuzzyExtractor, GroupParams, GroupParameterError, keygen, load_group_params
from atmas.protocol.entities import NCC, BaseStation, MobileUser, Satellite, SessionPhase
from atmas.scenario.dataset import generate_streams
from atmas.scenario.geometry import Geometry, assign_bs_many
from atmas.sim.adversary import Adversary
from atmas.sim.network import ChannelModel, Network

logger = logging.getLogger(__name__)

SUMMARY_HEADER = ("session_id", "outcome", "reason", "latency_ms")
# 32-byte verifiers plus the sentinel byte must fit in one group element
MIN_GROUP_BITS = 8 * 34


def resolve_group(name: str) -> GroupParams:
    if name == "modp2048":
        params = GroupParams.modp2048()
    else:
        try:
            params = load_group_params(name)
        except (OSError, KeyError, ValueError, GroupParameterError) as exc:
            raise ConfigError(f"cannot load group {name!r}: {exc}") from exc
    if params.p.bit_length() <= MIN_GROUP_BITS:
        raise ConfigError(f"group modulus must exceed {MIN_GROUP_BITS} bits for the protocol")
    return params


@dataclass
class World:
    cfg: ScenarioConfig
    net: Network
    geometry: Geometry
    params: GroupParams
    ncc: NCC
    satellite: Satellite
    bss: dict[int, BaseStation]
    mus: list[MobileUser]
    adversary: Adversary
    auth_start_ms: int = 0


@dataclass(frozen=True)
class SessionSummary:
    session_id: str
    mu: str
    outcome: str  # Authenticated | Rejected | Terminated
    reason: str
    latency_ms: int | None


@dataclass
class SimulationReport:
    events: list[dict]
    sessions: list[SessionSummary]
    registrations: dict[str, str]
    leaks: list[str]
    knowledge_size: int
    extras: dict = field(default_factory=dict)

    def event_lines(self) -> list[str]:
        return [json.dumps(e, sort_keys=True, separators=(",", ":")) for e in self.events]

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for s in self.sessions:
            w.writerow([s.session_id, s.outcome, s.reason, "" if s.latency_ms is None else s.latency_ms])
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log_path, summary_path = out / "events.jsonl", out / "summary.csv"
        log_path.write_text("".join(line + "\n" for line in self.event_lines()))
        summary_path.write_text(self.summary_csv())
        return log_path, summary_path

    def find(self, ev: str, **match) -> list[dict]:
        return [e for e in self.events if e["ev"] == ev and all(e.get(k) == v for k, v in match.items())]

    def rejections(self, reason: str | None = None) -> list[dict]:
        return [e for e in self.find("reject") if reason is None or e["reason"] == reason]

    def mutual_auth_violations(self) -> list[str]:
        """Authenticated MU sessions lacking a verified message in either direction."""
        problems = []
        for e in self.find("state", state="Authenticated", flow="auth"):
            if "session_id" not in e:
                continue
            node = e["node"]
            mine = [v for v in self.events if v["ev"] == "verify" and v["node"] == node and v["ok"]
                    and v["type"] == "AuthResponse" and v["t"] <= e["t"]]
            theirs = [v for v in self.events if v["ev"] == "verify" and v["ok"] and v["type"] == "AuthRequest"
                      and v["peer"] == e["endpoint"] and v["t"] <= e["t"]]
            if not mine or not theirs:
                problems.append(e["session_id"])
        return problems


def _mu_specs(cfg: ScenarioConfig) -> list[MUSpec]:
    if cfg.simulation.mus:
        return list(cfg.simulation.mus)
    return [MUSpec(id=f"mu-{i}") for i in range(cfg.simulation.n_mu)]


def _reading_flips(spec: MUSpec, extractor: FuzzyExtractor, noise: int, rng: np.random.Generator) -> list[int]:
    if spec.biometric_flips is not None:
        # concentrated in the first repetition block
        if not 0 <= spec.biometric_flips <= extractor.block:
            raise ConfigError(f"MU {spec.id}: biometric_flips must lie in [0, {extractor.block}]")
        return list(range(spec.biometric_flips))
    n = min(noise, extractor.key_bits)
    blocks = rng.choice(extractor.key_bits, size=n, replace=False)
    return sorted(int(b) * extractor.block + int(rng.integers(extractor.block)) for b in blocks)


def build_world(cfg: ScenarioConfig) -> World:
    cfg.validate()
    params = resolve_group(cfg.protocol.group)
    geometry = Geometry.from_config(cfg.geometry)
    pcfg = cfg.protocol
    specs = _mu_specs(cfg)

    root = np.random.SeedSequence(cfg.seed)
    net_ss, adv_ss, ncc_ss, sat_ss, bs_ss, mu_ss, data_ss = root.spawn(7)
    mu_rngs = [np.random.default_rng(s) for s in mu_ss.spawn(len(specs))]

    half = cfg.geometry.region_km / 2
    positions = []
    for spec, rng in zip(specs, mu_rngs):
        if spec.position_km is not None:
            positions.append(tuple(float(v) for v in spec.position_km))
        else:
            positions.append(tuple(float(v) for v in rng.uniform(-half, half, size=2)))
    serving = [int(i) for i in assign_bs_many(geometry, np.array(positions).reshape(-1, 2))[0]] if specs else []
    bs_indices = sorted(set(serving) | set(range(min(cfg.simulation.n_bs, len(geometry.bs_positions)))))

    ncc_rng = np.random.default_rng(ncc_ss)
    ncc = NCC(params, keygen(params, ncc_rng), ncc_rng, pcfg, cfg.auth)
    sat_rng = np.random.default_rng(sat_ss)
    satellite = Satellite("sat-0", params, keygen(params, sat_rng, validate=False), sat_rng, pcfg, ncc.keypair.public, geometry)
    bss = {}
    for idx, ss in zip(bs_indices, bs_ss.spawn(len(bs_indices))):
        rng = np.random.default_rng(ss)
        bss[idx] = BaseStation(
            f"bs-{idx}", params, keygen(params, rng, validate=False), rng, pcfg, ncc.keypair.public,
            geometry.bs_positions[idx],
        )
    extractor = FuzzyExtractor(pcfg.fuzzy_key_bits, pcfg.fuzzy_block)
    mus = []
    for spec, rng, pos in zip(specs, mu_rngs, positions):
        mu = MobileUser(
            spec.id, params, keygen(params, rng, validate=False), rng, pcfg, ncc.keypair.public,
            password=rng.bytes(16).hex(),
            template=extractor.random_template(rng),
            extractor=extractor,
            position_km=pos,
            security_level=SecurityLevel(spec.security_level),
        )
        mu.reading_flips = _reading_flips(spec, extractor, pcfg.biometric_noise_flips, rng)
        if spec.password_override is not None:
            mu.attempt_password = spec.password_override
        mu.report_interval_ms = cfg.dataset.window_s * 1000
        mus.append(mu)

    adversary = Adversary(cfg.simulation.adversaries, np.random.default_rng(adv_ss), params, ncc.keypair.public)
    net = Network(ChannelModel.from_config(cfg.channel), np.random.default_rng(net_ss), adversary)
    for node in (ncc, satellite, *bss.values(), *mus):
        net.add(node)
    for mu, idx in zip(mus, serving):
        net.attach(mu, bss[idx])
    ncc.mirrors = [satellite, *bss.values()]

    if cfg.simulation.continuous_windows > 0 and mus:
        _prepare_phase2(cfg, specs, mus, ncc, data_ss)

    world = World(cfg, net, geometry, params, ncc, satellite, bss, mus, adversary)
    _schedule(world)
    return world


def _prepare_phase2(cfg, specs, mus, ncc, data_ss) -> None:
    n_enroll = cfg.auth.min_enroll_windows
    n_cont = cfg.simulation.continuous_windows
    stream_seed = int(data_ss.generate_state(1, np.uint64)[0])
    streams = generate_streams(cfg, stream_seed, n_mu=len(mus), n_windows=n_enroll + n_cont)
    rng = np.random.default_rng(data_ss.spawn(1)[0])
    for i, (spec, mu) in enumerate(zip(specs, mus)):
        legit = streams.legit[i]
        negatives = enrollment_negatives(streams, i, cfg.auth.negatives_per_mu, rng)
        ncc.enrollment[mu.label] = (legit[:n_enroll], negatives, int(rng.integers(2**63)))
        rows = legit[n_enroll:].copy()
        if spec.spoof_after is not None:
            rows[spec.spoof_after:] = streams.spoof[i][n_enroll + spec.spoof_after:]
        mu.reports = rows
    ncc.forest_cfg = cfg.forest


def _schedule(world: World) -> None:
    net, timeout = world.net, world.cfg.protocol.timeout_ms
    net.command(0, world.satellite.label, "start_registration")
    for bs in world.bss.values():
        net.command(0, bs.label, "start_registration")
    for mu in world.mus:
        net.command(timeout, mu.label, "start_registration")
    world.auth_start_ms = 2 * timeout
    for i, mu in enumerate(world.mus):
        net.command(world.auth_start_ms + 10 * i, mu.label, "start_auth", f"{mu.label}-s0")


def _summarize(world: World) -> list[SessionSummary]:
    out = []
    for mu in world.mus:
        for s in mu.sessions:
            temp = f"MU:{mu.identity.temp_id}" if mu.identity else ""
            sat_rejects = [
                e for e in world.net.events
                if e["ev"] == "reject" and e["node"] == world.satellite.label and e.get("peer") == temp
                and e.get("msg_nonce") == s.request_nonce
            ]
            if s.state is SessionPhase.Authenticated:
                outcome, reason, latency = "Authenticated", "", s.established_at - s.started_at
            elif s.reason is not None and s.reason.value == "Denied":
                outcome, reason, latency = "Terminated", "Denied", s.established_at - s.started_at
            elif sat_rejects:
                outcome, reason, latency = "Rejected", sat_rejects[0]["reason"], sat_rejects[0]["t"] - s.started_at
            else:
                outcome = "Rejected"
                reason = "" if s.reason is None else s.reason.value
                latency = None
            out.append(SessionSummary(s.session_id, mu.label, outcome, reason, latency))
    return out


def collect(world: World) -> SimulationReport:
    nodes = [world.ncc, world.satellite, *world.bss.values(), *world.mus]
    secrets = [s for n in nodes for s in n.secrets()]
    regs = {}
    for n in nodes[1:]:
        regs[n.label] = "Registered" if n.registered else (n.reg.reason.value if n.reg.reason else n.reg.state.value)
    return SimulationReport(
        events=list(world.net.events),
        sessions=_summarize(world),
        registrations=regs,
        leaks=world.adversary.leaks(secrets),
        knowledge_size=len(world.adversary.knowledge),
    )


def run(cfg: ScenarioConfig) -> SimulationReport:
    world = build_world(cfg)
    world.net.run()
    return collect(world)
