import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atmas.config import ScenarioConfig
from atmas.crypto import Credential
from atmas.protocol.entities import RegistrationRecord, SessionPhase, rotate_temp_id
from atmas.protocol.flows import one_shot_authenticate, register_infrastructure, register_mu
from atmas.protocol.messages import (
    FIELD_INDEX,
    AuthMessage,
    Endpoint,
    EntityId,
    MalformedMessage,
    MsgType,
    NonceCache,
    Reason,
    Role,
    field_spans,
    seal,
    verify_message,
)
from atmas.security_suite import variant
from atmas.sim.runner import build_world, collect

KEY = b"k" * 32
MU = Endpoint(Role.MU, "t-1")
SAT = Endpoint(Role.Satellite, "sat-1")


def msg(ts=1000, nonce=7, payload=b"hello", key=KEY):
    return seal(MU, SAT, MsgType.AuthRequest, ts, nonce, payload, key)


def run_world(cfg):
    world = build_world(cfg)
    world.net.run()
    return world, collect(world)


class TestMessages:
    def test_accept(self):
        assert verify_message(msg(), KEY, 1020, 50, NonceCache()) is None

    def test_replayed_nonce(self):
        cache = NonceCache()
        m = msg()
        assert verify_message(m, KEY, 1020, 50, cache) is None
        assert verify_message(m, KEY, 1030, 50, cache) is Reason.ReplayedNonce

    def test_modified_payload(self):
        m = msg()
        forged = AuthMessage(m.sender, m.receiver, m.msg_type, m.timestamp, m.nonce, b"hellp", m.credential)
        assert verify_message(forged, KEY, 1020, 50, NonceCache()) is Reason.BadCredential

    def test_check_order(self):
        cache = NonceCache()
        assert verify_message(msg(), None, 2000, 50, cache) is Reason.Stale
        assert verify_message(msg(), None, 1010, 50, cache) is Reason.UnknownSender
        assert verify_message(msg(), None, 1010, 50, cache, unknown=Reason.BadIdentity) is Reason.BadIdentity
        cache.record(str(MU), 7)
        assert verify_message(msg(key=b"x" * 32), KEY, 1010, 50, cache) is Reason.ReplayedNonce

    def test_forgery_does_not_poison_cache(self):
        cache = NonceCache()
        assert verify_message(msg(key=b"x" * 32), KEY, 1010, 50, cache) is Reason.BadCredential
        assert verify_message(msg(), KEY, 1010, 50, cache) is None

    @given(st.binary(max_size=64), st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1), st.sampled_from(list(MsgType)))
    def test_wire_round_trip(self, payload, ts, nonce, mtype):
        m = seal(MU, SAT, mtype, ts, nonce, payload, KEY)
        assert AuthMessage.from_bytes(m.to_bytes()) == m

    @pytest.mark.parametrize("data", [b"", b"\x00\x00\x00\x03abc", msg().to_bytes()[:-1]])
    def test_malformed(self, data):
        with pytest.raises(MalformedMessage):
            AuthMessage.from_bytes(data)

    def test_bad_role(self):
        data = msg().to_bytes().replace(b"Satellite", b"Satellitx")
        with pytest.raises(MalformedMessage):
            AuthMessage.from_bytes(data)

    def test_field_spans(self):
        data = msg(payload=b"PAYLOAD").to_bytes()
        spans = field_spans(data)
        a, b = spans["payload"]
        assert data[a:b] == b"PAYLOAD"
        assert set(FIELD_INDEX) <= set(spans)
        assert spans["frame"] == (0, len(data))

    def test_nonce_cache_lru(self):
        cache = NonceCache(capacity=2)
        for n in (1, 2, 3):
            cache.record("p", n)
        assert not cache.seen("p", 1) and cache.seen("p", 3)
        assert not cache.seen("q", 3)
        with pytest.raises(ValueError):
            NonceCache(0)


class TestIdentity:
    def _record(self):
        return RegistrationRecord(EntityId(Role.MU, "mu-1", "t-0"), 5, Credential(bytes(32)), 0)

    def test_rotate_changes_temp(self):
        r = self._record()
        assert rotate_temp_id(r, np.random.default_rng(0)).entity.temp_id != r.entity.temp_id

    def test_rotate_deterministic(self):
        def seq(seed):
            rng, r, out = np.random.default_rng(seed), self._record(), []
            for _ in range(3):
                r = rotate_temp_id(r, rng)
                out.append(r.entity.temp_id)
            return out

        assert seq(4) == seq(4)

    def test_temp_differs_from_unique(self):
        with pytest.raises(ValueError):
            EntityId(Role.MU, "same", "same")


class TestRegistration:
    def test_honest_within_threshold(self):
        cfg = variant(ScenarioConfig(), channel={"sat_ncc_ms": 20.0, "bs_sat_ms": 20.0, "jitter_ms": 0.0})
        world, rep = run_world(cfg)
        assert set(rep.registrations.values()) == {"Registered"}
        rec = world.ncc.records[world.mus[0].identity.unique_id]
        assert rec.security_level.value == "Medium"
        assert rec.pw_verifier and rec.bio_verifier

    def test_slow_channel_stale(self):
        cfg = variant(ScenarioConfig(), channel={"sat_ncc_ms": 60.0, "jitter_ms": 0.0})
        world, rep = run_world(cfg)
        assert rep.registrations["sat-0"] != "Registered"
        assert {e["reason"] for e in rep.rejections()} == {"Stale"}

    @pytest.mark.parametrize("delay,reason", [(0, "ReplayedNonce"), (5000, "Stale")])
    def test_replayed_reg_request(self, delay, reason):
        adv = {"kind": "Replay", "target": "RegRequest", "delay_ms": delay}
        world, rep = run_world(variant(ScenarioConfig(), adversaries=[adv]))
        assert reason in {e["reason"] for e in rep.rejections()}
        assert world.satellite.registered

    def test_duplicate_registration(self):
        world, _ = run_world(variant(ScenarioConfig()))
        mu = world.mus[0]
        before = mu.identity
        out = register_mu(mu, world.ncc, world.net)
        assert not out.ok and out.reason is Reason.DuplicateIdentity
        assert mu.identity == before and mu.registered
        assert register_infrastructure(world.satellite, world.ncc, world.net).reason is Reason.DuplicateIdentity
        assert one_shot_authenticate(mu, world.satellite, world.net).state is SessionPhase.Authenticated

    def test_tampered_confirm_aborts(self):
        adv = {"kind": "Tamper", "target": "RegConfirm", "field": "payload", "bit": 3, "mu": "mu-0", "occurrence": 0}
        world, rep = run_world(variant(ScenarioConfig(), adversaries=[adv]))
        mu = world.mus[0]
        assert not mu.sessions or all(s.state is not SessionPhase.Authenticated for s in mu.sessions)


class TestOneShot:
    @pytest.mark.parametrize(
        "spec,reason",
        [
            ({"position_km": [200.0, 200.0]}, Reason.BadLocation),
            ({"password_override": "guess"}, Reason.BadPassword),
            ({"biometric_flips": 4}, Reason.BadBiometric),
        ],
    )
    def test_first_failing_check(self, spec, reason):
        world, rep = run_world(variant(ScenarioConfig(), mus=[{"id": "mu-0", **spec}]))
        assert rep.sessions[0].outcome == "Rejected"
        assert rep.sessions[0].reason == reason.value

    def test_biometric_at_capacity(self):
        _, rep = run_world(variant(ScenarioConfig(), mus=[{"id": "mu-0", "biometric_flips": 3}]))
        assert rep.sessions[0].outcome == "Authenticated"

    def test_fresh_session_key(self):
        world, _ = run_world(variant(ScenarioConfig()))
        mu = world.mus[0]
        s2 = one_shot_authenticate(mu, world.satellite, world.net, "again")
        assert s2.state is SessionPhase.Authenticated
        assert s2.key != mu.sessions[0].key

    def test_unregistered_mu(self):
        cfg = variant(ScenarioConfig(), channel={"loss_prob": 1.0})
        world, _ = run_world(cfg)
        s = one_shot_authenticate(world.mus[0], world.satellite, world.net)
        assert s.state is SessionPhase.Rejected
