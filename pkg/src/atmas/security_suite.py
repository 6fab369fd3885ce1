"""Scripted adversary scenarios and randomized harnesses for the Phase I protocol.

Each scenario runs the simulator and asserts predicates over its event log.
Results are flat rows (scenario, property, expected, observed, status,
evidence) so a run can be written as CSV and diffed between versions.
"""

from __future__ import annotations

import copy
import csv
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from atmas.config import ScenarioConfig, to_dict
from atmas.crypto import decode_parts, dh_shared
from atmas.protocol.entities import SessionPhase, session_key
from atmas.protocol.flows import one_shot_authenticate
from atmas.protocol.messages import AuthMessage, MalformedMessage, MsgType, field_spans
from atmas.scenario.geometry import Geometry
from atmas.sim.adversary import flip_bit
from atmas.sim.network import EventKind
from atmas.sim.runner import World, build_world, collect

logger = logging.getLogger(__name__)

SUITE_HEADER = ("scenario", "property", "expected", "observed", "status", "evidence")
TAMPER_TRIALS = 500

# first rejection reason acceptable for a flip inside each frame field
_CRED = frozenset({"BadCredential"})
TAMPER_REASONS = {
    "payload": _CRED,
    "credential": _CRED,
    "nonce": _CRED,
    "timestamp": frozenset({"Stale", "BadCredential"}),
    "sender": frozenset({"UnknownSender", "BadIdentity", "BadCredential", "Malformed"}),
    "sender_role": frozenset({"UnknownSender", "BadIdentity", "BadCredential", "Malformed"}),
    "receiver": frozenset({"Malformed", "UnknownSender", "BadCredential"}),
    "receiver_role": frozenset({"Malformed", "UnknownSender", "BadCredential"}),
    "type": frozenset({"Malformed", "BadCredential"}),
    "magic": frozenset({"Malformed"}),
    "framing": frozenset({"Malformed"}),
}


@dataclass(frozen=True)
class PropertyResult:
    scenario: str
    property: str
    expected: str
    observed: str
    passed: bool
    evidence: str = ""

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"

    def csv_row(self) -> list:
        return [self.scenario, self.property, self.expected, self.observed, self.status, self.evidence]


def write_results(results, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUITE_HEADER)
        w.writerows(r.csv_row() for r in results)
    return path


def variant(base: ScenarioConfig, *, mus=None, adversaries=(), channel=None, seed=None) -> ScenarioConfig:
    """Single-MU simulation config derived from ``base`` (its protocol, channel and geometry sections)."""
    d = to_dict(base)
    d["simulation"] = {
        "n_mu": 1,
        "n_bs": 0,
        "continuous_windows": 0,
        "mus": list(mus) if mus is not None else [{"id": "mu-0"}],
        "adversaries": list(adversaries),
    }
    if channel:
        d["channel"].update(channel)
    if seed is not None:
        d["seed"] = seed
    return ScenarioConfig.from_dict(d)


def _run(cfg: ScenarioConfig) -> tuple[World, object]:
    world = build_world(cfg)
    world.net.run()
    return world, collect(world)


def _outcome(report, mu: str = "mu-0") -> tuple[str, str]:
    for s in report.sessions:
        if s.mu == mu:
            return s.outcome, s.reason
    return "none", report.registrations.get(mu, "")


def _reasons(report) -> Counter:
    return Counter(e["reason"] for e in report.rejections())


def _fmt(counter: Counter) -> str:
    return ";".join(f"{k}={v}" for k, v in sorted(counter.items())) or "none"


class _Suite:
    def __init__(self, base: ScenarioConfig, out_dir: Path | None = None):
        self.base = base
        self.out_dir = out_dir
        self.results: list[PropertyResult] = []
        pcfg = base.protocol
        self.block = pcfg.fuzzy_block
        self.capacity = pcfg.fuzzy_block // 2

    def record(self, scenario, prop, expected, observed, passed, evidence="") -> None:
        self.results.append(PropertyResult(scenario, prop, str(expected), str(observed), bool(passed), evidence))

    def evidence(self, name: str, report) -> str:
        """Write the scenario's event log; the returned path is relative to ``out_dir``."""
        if self.out_dir is None:
            return ""
        rel = Path("logs") / name
        report.write(self.out_dir / rel)
        return (rel / "events.jsonl").as_posix()

    def scenario(self, name: str, cfg: ScenarioConfig):
        world, report = _run(cfg)
        return world, report, self.evidence(name, report)

    # -- scripted scenarios ----------------------------------------------------

    def honest(self):
        world, rep, ev = self.scenario("honest", variant(self.base))
        outcome, _ = _outcome(rep)
        self.record("honest", "mutual-authentication", "Authenticated", outcome, outcome == "Authenticated", ev)
        bad = rep.mutual_auth_violations()
        self.record("honest", "both-directions-verified", "[]", bad, not bad, ev)
        unreg = sorted(k for k, v in rep.registrations.items() if v != "Registered")
        self.record("honest", "all-registered", "[]", unreg, not unreg, ev)
        self.record("honest", "no-rejections", "none", _fmt(_reasons(rep)), not rep.rejections(), ev)
        self.record("honest", "no-secret-on-wire", "[]", rep.leaks, not rep.leaks, ev)
        return world

    def eavesdrop(self):
        cfg = variant(self.base, adversaries=[{"kind": "Eavesdrop"}])
        world, rep, ev = self.scenario("eavesdrop", cfg)
        self.record("eavesdrop", "frames-observed", ">0", rep.knowledge_size, rep.knowledge_size > 0, ev)
        self.record("eavesdrop", "no-secret-in-knowledge", "[]", rep.leaks, not rep.leaks, ev)

    def replays(self):
        thr = self.base.protocol.threshold_ms
        cases = [
            ("replay-auth-in-window", {"kind": "Replay", "target": "AuthRequest", "delay_ms": 1}, "ReplayedNonce"),
            ("replay-auth-relayed", {"kind": "Replay", "target": "AuthRequest", "occurrence": 1, "delay_ms": 1}, "ReplayedNonce"),
            ("replay-auth-stale", {"kind": "Replay", "target": "AuthRequest", "delay_ms": thr + 100}, "Stale"),
            ("replay-response", {"kind": "Replay", "target": "AuthResponse", "delay_ms": 1}, "ReplayedNonce"),
        ]
        for name, adv, reason in cases:
            _, rep, ev = self.scenario(name, variant(self.base, adversaries=[adv]))
            got = _reasons(rep)
            self.record(name, "replay-rejected", reason, _fmt(got), got.get(reason, 0) >= 1 and len(got) == 1, ev)
            outcome, _ = _outcome(rep)
            self.record(name, "honest-session-unaffected", "Authenticated", outcome, outcome == "Authenticated", ev)

        adv = {"kind": "Replay", "target": "RegConfirm", "mu": "mu-0", "delay_ms": 1}
        world, rep, ev = self.scenario("replay-regconfirm", variant(self.base, adversaries=[adv]))
        got = _reasons(rep)
        self.record("replay-regconfirm", "replay-rejected", "ReplayedNonce", _fmt(got), got.get("ReplayedNonce", 0) >= 1, ev)
        n_mu = len([r for r in world.ncc.records.values() if r.entity.role.value == "MU"])
        self.record("replay-regconfirm", "registration-unchanged", "1 MU record, Registered",
                    f"{n_mu} MU record, {rep.registrations['mu-0']}", n_mu == 1 and rep.registrations["mu-0"] == "Registered", ev)

    def tampers(self):
        cases = [
            ("tamper-auth-payload", {"kind": "Tamper", "target": "AuthRequest", "field": "payload"}, {"BadCredential"}),
            ("tamper-auth-relayed", {"kind": "Tamper", "target": "AuthRequest", "occurrence": 1, "field": "payload"}, {"BadCredential"}),
            ("tamper-auth-timestamp", {"kind": "Tamper", "target": "AuthRequest", "field": "timestamp"}, {"Stale", "BadCredential"}),
            ("tamper-auth-timestamp-msb", {"kind": "Tamper", "target": "AuthRequest", "field": "timestamp", "bit": 0}, {"Stale"}),
            ("tamper-response-credential", {"kind": "Tamper", "target": "AuthResponse", "field": "credential"}, {"BadCredential"}),
        ]
        for name, adv, allowed in cases:
            _, rep, ev = self.scenario(name, variant(self.base, adversaries=[adv]))
            got = _reasons(rep)
            ok = bool(got) and set(got) <= allowed
            self.record(name, "tamper-rejected", "|".join(sorted(allowed)), _fmt(got), ok, ev)
            outcome, _ = _outcome(rep)
            self.record(name, "no-session", "not Authenticated", outcome, outcome != "Authenticated", ev)

        adv = {"kind": "Tamper", "target": "RegChallenge", "mu": "mu-0", "field": "payload"}
        world, rep, ev = self.scenario("tamper-reg-confirm", variant(self.base, adversaries=[adv]))
        got = _reasons(rep)
        self.record("tamper-reg-confirm", "tamper-rejected", "BadCredential", _fmt(got), set(got) == {"BadCredential"}, ev)
        mu = world.mus[0]
        self.record("tamper-reg-confirm", "mu-aborts-no-session", "unregistered, 0 sessions",
                    f"{rep.registrations['mu-0']}, {len(mu.sessions)} sessions", not mu.registered and not mu.sessions, ev)

    def impersonation(self):
        adv = {"kind": "Impersonate", "target": "AuthRequest", "mode": "forge"}
        _, rep, ev = self.scenario("forge-auth-request", variant(self.base, adversaries=[adv]))
        got = _reasons(rep)
        self.record("forge-auth-request", "credential-less-auth", "BadIdentity", _fmt(got), set(got) == {"BadIdentity"}, ev)
        outcome, _ = _outcome(rep)
        self.record("forge-auth-request", "no-session", "not Authenticated", outcome, outcome != "Authenticated", ev)

        adv = {"kind": "Impersonate", "target": "AuthResponse", "mode": "forge"}
        _, rep, ev = self.scenario("drop-then-forge", variant(self.base, adversaries=[adv]))
        got = _reasons(rep)
        self.record("drop-then-forge", "forged-response", "UnknownSender", _fmt(got), set(got) == {"UnknownSender"}, ev)
        outcome, _ = _outcome(rep)
        self.record("drop-then-forge", "no-session", "not Authenticated", outcome, outcome != "Authenticated", ev)

        # injected once the victim's record exists
        name = "duplicate-registration"
        adv = {"kind": "Impersonate", "target": "RegRequest", "mode": "duplicate", "mu": "mu-0",
               "delay_ms": self.base.protocol.timeout_ms // 2}
        world, rep, ev = self.scenario(name, variant(self.base, adversaries=[adv]))
        got = _reasons(rep)
        self.record(name, "duplicate-rejected", "DuplicateIdentity", _fmt(got), set(got) == {"DuplicateIdentity"}, ev)
        n_mu = len([r for r in world.ncc.records.values() if r.entity.role.value == "MU"])
        self.record(name, "one-record-per-identity", 1, n_mu, n_mu == 1, ev)

    def credential_faults(self):
        far = self._far_position()
        wrong_pw = np.random.default_rng([self.base.seed, 0xBAD]).bytes(16).hex()
        bio = self.capacity + 1
        cases = [
            ("guessed-password", {"password_override": wrong_pw}, "BadPassword"),
            ("wrong-biometric", {"biometric_flips": bio}, "BadBiometric"),
            ("biometric-at-capacity", {"biometric_flips": self.capacity}, None),
            ("bad-location", {"position_km": far}, "BadLocation"),
            ("order-location-first", {"position_km": far, "password_override": wrong_pw, "biometric_flips": bio}, "BadLocation"),
            ("order-password-before-biometric", {"password_override": wrong_pw, "biometric_flips": bio}, "BadPassword"),
        ]
        for name, spec, reason in cases:
            _, rep, ev = self.scenario(name, variant(self.base, mus=[{"id": "mu-0", **spec}]))
            outcome, got = _outcome(rep)
            if reason is None:
                self.record(name, "accepted", "Authenticated", outcome, outcome == "Authenticated", ev)
            else:
                self.record(name, "first-failing-check", f"Rejected/{reason}", f"{outcome}/{got}",
                            outcome == "Rejected" and got == reason and set(_reasons(rep)) == {reason}, ev)

        adv = {"kind": "Impersonate", "target": "AuthRequest", "mode": "forge"}
        spec = {"id": "mu-0", "position_km": far, "password_override": wrong_pw}
        _, rep, ev = self.scenario("order-identity-first", variant(self.base, mus=[spec], adversaries=[adv]))
        got = _reasons(rep)
        self.record("order-identity-first", "first-failing-check", "BadIdentity", _fmt(got), set(got) == {"BadIdentity"}, ev)

    def _far_position(self) -> list[float]:
        """A point more than the coverage radius (plus 5 km) from every BS."""
        g = Geometry.from_config(self.base.geometry)
        off = float(g.bs_positions.max()) + g.bs_coverage_km + 5.0
        return [off, off]

    def channel(self):
        thr = self.base.protocol.threshold_ms
        slow = {"bs_sat_ms": float(thr + 10), "jitter_ms": 0.0}
        world, rep, ev = self.scenario("stale-channel", variant(self.base, channel=slow))
        got = _reasons(rep)
        self.record("stale-channel", "stale-rejected", "Stale", _fmt(got), got.get("Stale", 0) >= 1 and set(got) == {"Stale"}, ev)
        auth = [s for s in rep.sessions if s.outcome == "Authenticated"]
        self.record("stale-channel", "no-session", 0, len(auth), not auth, ev)

        ok = {"bs_sat_ms": 20.0, "sat_ncc_ms": 10.0, "jitter_ms": 0.0}
        _, rep, ev = self.scenario("channel-within-threshold", variant(self.base, channel=ok))
        outcome, _ = _outcome(rep)
        self.record("channel-within-threshold", "authenticated", "Authenticated", outcome, outcome == "Authenticated", ev)

        _, rep, ev = self.scenario("lossy-channel", variant(self.base, channel={"loss_prob": 1.0}))
        auth = [s for s in rep.sessions if s.outcome == "Authenticated"]
        timeouts = len(rep.find("timeout"))
        self.record("lossy-channel", "no-session-timeouts", "0 sessions, timeouts>0",
                    f"{len(auth)} sessions, {timeouts} timeouts", not auth and timeouts > 0, ev)

    def forward_secrecy(self, world: World):
        """Session keys need fresh per-session values; long-term keys plus the wire are not enough."""
        mu, sat, net = world.mus[0], world.satellite, world.net
        second = one_shot_authenticate(mu, sat, net, "mu-0-s1")
        sessions = [s for s in mu.sessions if s.state is SessionPhase.Authenticated]
        keys = {s.key for s in sessions}
        nonces = {s.session_nonce for s in sessions}
        self.record("forward-secrecy", "fresh-nonce-and-key-per-session", "2 distinct",
                    f"{len(nonces)} nonces, {len(keys)} keys", second.state is SessionPhase.Authenticated
                    and len(sessions) == 2 and len(keys) == 2 and len(nonces) == 2)
        link = dh_shared(mu.params, mu.keypair.private, sat.keypair.public)
        wire = _auth_wire_values(world)
        hits = 0
        for s in sessions:
            for mu_eph, sat_eph, sn in wire:
                for shared in (link, world.ncc.link_key_for_public(mu.keypair.public)):
                    for nonce in (sn, s.session_nonce, 0):
                        if session_key(shared, nonce, mu_eph, sat_eph) == s.key:
                            hits += 1
        self.record("forward-secrecy", "not-derivable-from-long-term-keys", 0, hits, hits == 0 and len(wire) >= 2)

    # -- randomized harnesses --------------------------------------------------

    def tamper_harness(self, trials: int = TAMPER_TRIALS):
        snaps = delivery_snapshots(variant(self.base))
        rng = np.random.default_rng([self.base.seed, 0x7A3])
        reasons, fields, failures = Counter(), Counter(), []
        for i in range(trials):
            k = int(rng.integers(len(snaps)))
            data = snaps[k].net.peek().payload[1]
            bit = int(rng.integers(len(data) * 8))
            outcome = tamper_probe(snaps[k], bit)
            reasons[outcome.reason] += 1
            fields[outcome.field] += 1
            if not outcome.ok:
                failures.append(f"trial {i}: delivery {k} bit {bit} field {outcome.field} -> {outcome.reason} accepted={outcome.accepted}")
        self.record("tamper-random", "single-bit-flips-rejected", f"{trials}/{trials}",
                    f"{trials - len(failures)}/{trials}", not failures,
                    f"reasons {_fmt(reasons)}; fields {_fmt(fields)}" + ("; " + " | ".join(failures[:5]) if failures else ""))

    def replay_harness(self):
        snaps = delivery_snapshots(variant(self.base))
        failures, reasons = [], Counter()
        for k, snap in enumerate(snaps):
            reason, accepted_twice = replay_probe(snap)
            reasons[reason] += 1
            if accepted_twice or reason not in ("ReplayedNonce", "Stale"):
                failures.append(f"delivery {k}: {reason} twice={accepted_twice}")
        self.record("replay-every-message", "redelivery-rejected", f"{len(snaps)}/{len(snaps)}",
                    f"{len(snaps) - len(failures)}/{len(snaps)}", not failures and len(snaps) > 0,
                    f"reasons {_fmt(reasons)}" + ("; " + " | ".join(failures[:5]) if failures else ""))


def _auth_wire_values(world: World) -> list[tuple[int, int, int]]:
    """(mu ephemeral, satellite ephemeral, session nonce) pairs recovered from observed frames."""
    reqs, resps = {}, []
    for data in world.adversary.knowledge:
        try:
            msg = AuthMessage.from_bytes(data)
        except MalformedMessage:
            continue
        if msg.msg_type is MsgType.AuthRequest and msg.sender.role.value == "MU":
            _, eph_b, sn_b, _, _ = decode_parts(msg.payload)
            reqs[int.from_bytes(sn_b, "big")] = int.from_bytes(eph_b, "big")
        elif msg.msg_type is MsgType.AuthResponse:
            eph_b, sn_b, _ = decode_parts(msg.payload)
            resps.append((int.from_bytes(sn_b, "big"), int.from_bytes(eph_b, "big")))
    return [(reqs[sn], eph, sn) for sn, eph in resps if sn in reqs]


def delivery_snapshots(cfg: ScenarioConfig) -> list[World]:
    """Deep copies of the world taken just before each frame delivery of a full run."""
    world = build_world(cfg)
    net = world.net
    snaps = []
    while net.pending():
        if net.peek().kind is EventKind.Deliver:
            snaps.append(copy.deepcopy(world))
        net.step()
    return snaps


def field_of(data: bytes, byte: int) -> str:
    for name, (lo, hi) in field_spans(data).items():
        if name != "frame" and lo <= byte < hi:
            return name
    return "framing"


def _msg_key(data: bytes):
    try:
        m = AuthMessage.from_bytes(data)
    except MalformedMessage:
        return None
    return (str(m.sender), m.msg_type.name, m.nonce)


def _verified(events, key) -> int:
    return sum(1 for e in events if e["ev"] == "verify" and e["ok"] and (e["peer"], e["type"], e["msg_nonce"]) == key)


def _run_until(net, since: int, horizon: int, done: Callable[[list[dict]], bool]) -> None:
    net.run(until=net.now + horizon, stop=lambda: done(net.events[since:]))


@dataclass(frozen=True)
class TamperOutcome:
    field: str
    reason: str
    accepted: bool

    @property
    def ok(self) -> bool:
        return not self.accepted and self.reason in TAMPER_REASONS[self.field]


def tamper_probe(snapshot: World, bit: int) -> TamperOutcome:
    """Flip one bit of the next in-flight frame and report how the network reacts."""
    world = copy.deepcopy(snapshot)
    net = world.net
    data = net.peek().payload[1]
    tampered = flip_bit(data, bit)
    keys = {k for k in (_msg_key(data), _msg_key(tampered)) if k is not None}
    net.rewrite_next(tampered)
    since = len(net.events)

    def done(new):
        return any(e["ev"] in ("reject", "undeliverable") for e in new) or any(_verified(new, k) for k in keys)

    _run_until(net, since, world.cfg.protocol.timeout_ms, done)
    new = net.events[since:]
    first = next((e for e in new if e["ev"] in ("reject", "undeliverable")), None)
    reason = "none" if first is None else first.get("reason", "Undeliverable")
    accepted = any(_verified(new, k) for k in keys)
    return TamperOutcome(field_of(data, bit // 8), reason, accepted)


def replay_probe(snapshot: World) -> tuple[str, bool]:
    """Deliver the next frame, re-deliver a copy 1 ms later; return (first rejection, accepted twice)."""
    world = copy.deepcopy(snapshot)
    net = world.net
    hop_label, data, _ = net.peek().payload
    key = _msg_key(data)
    net.step()
    since = len(net.events)
    net.inject(net.nodes[hop_label], data, 1)
    _run_until(net, since, world.cfg.protocol.timeout_ms, lambda new: any(e["ev"] == "reject" for e in new))
    first = next((e for e in net.events[since:] if e["ev"] == "reject"), None)
    return ("none" if first is None else first["reason"]), _verified(net.events, key) > 1


SCENARIOS = ("honest", "eavesdrop", "replays", "tampers", "impersonation", "credential_faults", "channel",
             "forward_secrecy", "tamper_harness", "replay_harness")


def run_protocol_suite(cfg: ScenarioConfig, out_dir: str | Path | None = None, trials: int = TAMPER_TRIALS) -> list[PropertyResult]:
    suite = _Suite(cfg, None if out_dir is None else Path(out_dir))
    world = suite.honest()
    suite.eavesdrop()
    suite.replays()
    suite.tampers()
    suite.impersonation()
    suite.credential_faults()
    suite.channel()
    suite.forward_secrecy(world)
    suite.tamper_harness(trials)
    suite.replay_harness()
    failed = [r for r in suite.results if not r.passed]
    for r in failed:
        logger.warning("property failed: %s/%s expected %s observed %s", r.scenario, r.property, r.expected, r.observed)
    return suite.results


def all_passed(results) -> bool:
    return all(r.passed for r in results)
