"""Phase I entity state machines: NCC, satellite, base station and mobile user.

Each entity is a single-threaded actor. It reacts to delivered frames and
timers, and talks to the outside world only through the network it is
attached to (``self.net``), which provides ``transmit``, ``set_timer``,
``alias`` and ``log``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from atmas.auth.engine import (
    EnrollmentDataInsufficient,
    ModelMissing,
    ModelRegistry,
    Verdict,
    authenticate_window,
    enroll,
)
from atmas.common import SecurityLevel
from atmas.config import AuthConfig, ProtocolConfig
from atmas.crypto import (
    BiometricTemplate,
    Ciphertext,
    Credential,
    FuzzyExtractor,
    GroupParams,
    KeyPair,
    decode_parts,
    decrypt_bytes,
    dh_shared,
    encode_parts,
    encrypt_bytes,
    hash_credential,
    keygen,
)
from atmas.protocol.messages import (
    AuthMessage,
    Endpoint,
    EntityId,
    MalformedMessage,
    MsgType,
    NonceCache,
    Reason,
    Role,
    int_bytes,
    pack_floats,
    seal,
    u64,
    unpack_floats,
    verify_message,
)
from atmas.scenario.dataset import FactorVector
from atmas.scenario.geometry import Geometry, in_beam

logger = logging.getLogger(__name__)

NCC_ENDPOINT = Endpoint(Role.NCC, "ncc")


class SessionPhase(str, Enum):
    Idle = "Idle"
    AwaitChallenge = "AwaitChallenge"
    AwaitConfirm = "AwaitConfirm"
    Authenticated = "Authenticated"
    Rejected = "Rejected"


@dataclass
class SessionState:
    peer: EntityId | Endpoint | None
    state: SessionPhase = SessionPhase.Idle
    session_nonce: int = 0
    established_at: int | None = None
    session_id: str = ""
    started_at: int = 0
    reason: Reason | None = None
    request_nonce: int = 0
    key: bytes = field(default=b"", repr=False)

    @property
    def terminal(self) -> bool:
        return self.state in (SessionPhase.Authenticated, SessionPhase.Rejected)


@dataclass(frozen=True)
class RegistrationRecord:
    entity: EntityId
    public_key: int
    credential: Credential
    enrolled_at: int
    security_level: SecurityLevel = SecurityLevel.Medium
    position_km: tuple[float, float] | None = None
    # MU verifiers: hashes bound to the identity, never the raw secrets
    pw_verifier: bytes = field(default=b"", repr=False)
    bio_verifier: bytes = field(default=b"", repr=False)


def _h(*parts: bytes) -> bytes:
    return hash_credential(list(parts)).digest


def _new_temp_id(rng: np.random.Generator) -> str:
    return "t-" + rng.bytes(8).hex()


def rotate_temp_id(record: RegistrationRecord, rng: np.random.Generator) -> RegistrationRecord:
    old = record.entity
    temp = _new_temp_id(rng)
    while temp in (old.temp_id, old.unique_id):
        temp = _new_temp_id(rng)
    return replace(record, entity=EntityId(old.role, old.unique_id, temp))


def params_digest(params: GroupParams) -> bytes:
    return _h(b"params", int_bytes(params.p), int_bytes(params.g), int_bytes(params.q))


def pw_verifier(identity: str, password: str) -> bytes:
    return _h(b"pw", identity.encode(), password.encode())


def bio_verifier(identity: str, fuzzy_key: bytes) -> bytes:
    return _h(b"bio", identity.encode(), fuzzy_key)


def session_key(shared: bytes, session_nonce: int, mu_eph: int, sat_eph: int) -> bytes:
    return _h(b"session", shared, u64(session_nonce), int_bytes(mu_eph), int_bytes(sat_eph))


def _ct_parts(ct: Ciphertext) -> list[bytes]:
    return [int_bytes(ct.c1), int_bytes(ct.c2)]


def _ct_from(c1: bytes, c2: bytes) -> Ciphertext:
    return Ciphertext(int.from_bytes(c1, "big"), int.from_bytes(c2, "big"))


class Node:
    role: Role

    def __init__(self, label: str, params: GroupParams, keypair: KeyPair, rng: np.random.Generator, pcfg: ProtocolConfig):
        self.label = label
        self.endpoint = Endpoint(self.role, label)
        self.params = params
        self.keypair = keypair
        self.rng = rng
        self.threshold_ms = pcfg.threshold_ms
        self.timeout_ms = pcfg.timeout_ms
        self.nonces = NonceCache(pcfg.nonce_cache_size)
        self.peer_keys: dict[Endpoint, int] = {}
        self._links: dict[int, bytes] = {}
        self.net = None

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.endpoint})"

    # -- plumbing ------------------------------------------------------------

    def log(self, ev: str, **fields) -> None:
        if self.net is not None:
            self.net.log(ev, node=self.label, **fields)

    def link_key_for_public(self, public: int) -> bytes:
        key = self._links.get(public)
        if key is None:
            key = self._links[public] = dh_shared(self.params, self.keypair.private, public)
        return key

    def link_key(self, ep: Endpoint) -> bytes | None:
        pub = self.peer_keys.get(ep)
        return None if pub is None else self.link_key_for_public(pub)

    def next_nonce(self) -> int:
        return int.from_bytes(self.rng.bytes(8), "big")

    def send(
        self, receiver: Endpoint, msg_type: MsgType, payload: bytes, now: int,
        key: bytes | None = None, sender: Endpoint | None = None,
    ) -> AuthMessage:
        if key is None:
            key = self.link_key(receiver)
        if key is None:
            raise KeyError(f"{self} has no key for {receiver}")
        msg = seal(sender or self.endpoint, receiver, msg_type, now, self.next_nonce(), payload, key)
        self.net.transmit(self, msg)
        return msg

    def check(self, msg: AuthMessage, now: int, key: bytes | None, unknown: Reason = Reason.UnknownSender) -> Reason | None:
        reason = verify_message(msg, key, now, self.threshold_ms, self.nonces, unknown)
        self.log(
            "verify", peer=str(msg.sender), type=msg.msg_type.name, msg_nonce=msg.nonce,
            ok=reason is None, reason=None if reason is None else reason.value,
        )
        return reason

    def reject(self, msg: AuthMessage | None, reason: Reason, **extra) -> None:
        fields = {"reason": reason.value, **extra}
        if msg is not None:
            fields.update(peer=str(msg.sender), type=msg.msg_type.name, msg_nonce=msg.nonce)
        self.log("reject", **fields)

    @property
    def name_endpoint(self) -> Endpoint:
        """The pre-registration address; registration traffic always uses it."""
        return Endpoint(self.role, self.label)

    def owns(self, ep: Endpoint) -> bool:
        return ep == self.endpoint

    def deliver(self, data: bytes, now: int) -> None:
        try:
            msg = AuthMessage.from_bytes(data)
        except MalformedMessage as exc:
            self.log("reject", reason=Reason.Malformed.value, detail=str(exc))
            return
        self.on_message(msg, now)

    def on_message(self, msg: AuthMessage, now: int) -> None:
        handler = getattr(self, f"handle_{msg.msg_type.name}", None)
        if handler is None or not self.owns(msg.receiver):
            self.reject(msg, Reason.Malformed, detail="unexpected message")
            return
        try:
            handler(msg, now)
        except (MalformedMessage, ValueError) as exc:
            # payload framing failures after the credential checked out
            self.reject(msg, Reason.Malformed, detail=str(exc))

    def on_timer(self, token: str, now: int) -> None:
        pass

    def secrets(self) -> list[tuple[str, bytes]]:
        """Secret byte strings that must never appear on the wire (leak scans)."""
        priv = self.keypair.private
        return [
            (f"{self.label}.private", int_bytes(priv)),
            (f"{self.label}.private.fixed", priv.to_bytes(self.params.byte_length, "big")),
        ]


class _Infrastructure(Node):
    """BS and satellite: register with the NCC, then serve MUs."""

    def __init__(self, label, params, keypair, rng, pcfg, ncc_public: int, position_km=None):
        super().__init__(label, params, keypair, rng, pcfg)
        self.peer_keys[NCC_ENDPOINT] = ncc_public
        self.position_km = None if position_km is None else (float(position_km[0]), float(position_km[1]))
        self.reg = SessionState(peer=NCC_ENDPOINT)
        self.identity: EntityId | None = None
        self._pending: tuple[str, str, bytes] | None = None

    @property
    def registered(self) -> bool:
        return self.identity is not None

    def owns(self, ep: Endpoint) -> bool:
        return ep == self.endpoint or ep == self.name_endpoint

    def start_registration(self, now: int) -> None:
        pos = b"" if self.position_km is None else pack_floats(*self.position_km)
        payload = encode_parts([self.role.value.encode(), self.label.encode(), int_bytes(self.keypair.public), pos])
        self.reg = SessionState(peer=NCC_ENDPOINT, state=SessionPhase.AwaitChallenge, started_at=now)
        msg = self.send(NCC_ENDPOINT, MsgType.RegRequest, payload, now, sender=self.name_endpoint)
        self.reg.request_nonce = msg.nonce
        self.log("state", flow="registration", state=self.reg.state.value)
        self.net.set_timer(self, "reg", now + self.timeout_ms)

    def handle_RegChallenge(self, msg: AuthMessage, now: int) -> None:
        reason = self.check(msg, now, self.link_key(msg.sender) if msg.sender == NCC_ENDPOINT else None)
        if reason is not None:
            return self.reject(msg, reason)
        if self.reg.state is not SessionPhase.AwaitChallenge:
            return self.reject(msg, Reason.Malformed, detail="no registration in progress")
        uid, tid, c1, c2, pdig = decode_parts(msg.payload)
        token = decrypt_bytes(self.params, self.keypair.private, _ct_from(c1, c2))
        if token is None or pdig != params_digest(self.params):
            self.reg.state, self.reg.reason = SessionPhase.Rejected, Reason.BadCredential
            self.log("state", flow="registration", state="Rejected", reason="BadCredential")
            return self.reject(msg, Reason.BadCredential, detail="parameter mismatch")
        self._pending = (uid.decode(), tid.decode(), token)
        confirm = _h(b"reg-confirm", token, uid, tid, pdig)
        self.reg.state = SessionPhase.AwaitConfirm
        self.send(NCC_ENDPOINT, MsgType.RegConfirm, confirm, now, sender=self.name_endpoint)

    def handle_RegConfirm(self, msg: AuthMessage, now: int) -> None:
        reason = self.check(msg, now, self.link_key(msg.sender) if msg.sender == NCC_ENDPOINT else None)
        if reason is not None:
            return self.reject(msg, reason)
        if self.reg.state is not SessionPhase.AwaitConfirm or self._pending is None:
            return self.reject(msg, Reason.Malformed, detail="no confirmation pending")
        uid, tid, token = self._pending
        if msg.payload != _h(b"reg-ack", token, uid.encode()):
            return self.reject(msg, Reason.BadCredential, detail="ack mismatch")
        self.identity = EntityId(self.role, uid, tid)
        self.endpoint = Endpoint(self.role, uid)
        self.net.alias(self, self.endpoint)
        self.reg.state, self.reg.established_at = SessionPhase.Authenticated, now
        self._pending = None
        self.log("registered", unique_id=uid, latency_ms=now - self.reg.started_at)

    def on_timer(self, token: str, now: int) -> None:
        if token == "reg" and not self.reg.terminal:
            self.reg.state, self.reg.reason = SessionPhase.Rejected, Reason.Timeout
            self.log("timeout", flow="registration")


class NCC(Node):
    role = Role.NCC

    def __init__(self, params, keypair, rng, pcfg, auth_cfg: AuthConfig | None = None, label: str = "ncc"):
        super().__init__(label, params, keypair, rng, pcfg)
        self.records: dict[str, RegistrationRecord] = {}
        self.by_name: dict[tuple[Role, str], str] = {}
        self.pending: dict[Endpoint, dict] = {}
        self.mirrors: list[_Infrastructure] = []
        self.registry = ModelRegistry()
        self.auth_cfg = auth_cfg or AuthConfig()
        # registration name -> (legitimate windows, negatives, seed) for Phase II enrollment
        self.enrollment: dict[str, tuple] = {}
        self.forest_cfg = None

    def records_of(self, role: Role) -> list[RegistrationRecord]:
        return [r for uid, r in sorted(self.records.items()) if r.entity.role is role]

    def handle_RegRequest(self, msg: AuthMessage, now: int) -> None:
        try:
            parts = decode_parts(msg.payload)
            role, name, pub = Role(parts[0].decode()), parts[1].decode(), int.from_bytes(parts[2], "big")
        except (ValueError, IndexError, UnicodeDecodeError) as exc:
            # the credential key comes from this payload, so it cannot be verified
            return self.reject(msg, Reason.BadCredential, detail=f"unreadable request: {exc}")
        if role is not msg.sender.role or name != msg.sender.ident or not 1 < pub < self.params.p - 1:
            return self.reject(msg, Reason.BadCredential, detail="request does not match sender")
        key = self.link_key_for_public(pub)
        reason = self.check(msg, now, key)
        if reason is not None:
            return self.reject(msg, reason)
        if (role, name) in self.by_name or msg.sender in self.pending:
            return self.reject(msg, Reason.DuplicateIdentity)

        uid = f"{role.value.lower()}-{self.rng.bytes(4).hex()}"
        tid = _new_temp_id(self.rng)
        pdig = params_digest(self.params)
        pend = {"pub": pub, "uid": uid, "tid": tid, "role": role}
        if role is Role.MU:
            if len(parts) != 8:
                return self.reject(msg, Reason.Malformed, detail="MU request layout")
            pwv = decrypt_bytes(self.params, self.keypair.private, _ct_from(parts[3], parts[4]))
            biov = decrypt_bytes(self.params, self.keypair.private, _ct_from(parts[5], parts[6]))
            if pwv is None or biov is None:
                return self.reject(msg, Reason.BadCredential, detail="undecryptable verifiers")
            try:
                level = SecurityLevel(parts[7].decode())
            except ValueError as exc:
                return self.reject(msg, Reason.Malformed, detail=str(exc))
            confirm = _h(b"mu-confirm", name.encode(), uid.encode(), tid.encode(), pwv, biov, pdig)
            sats = self.records_of(Role.Satellite)
            sat_uid = sats[0].entity.unique_id.encode() if sats else b""
            sat_pub = int_bytes(sats[0].public_key) if sats else b""
            pend.update(pwv=pwv, biov=biov, level=level, confirm=confirm)
            payload = encode_parts([uid.encode(), tid.encode(), confirm, sat_uid, sat_pub])
        else:
            position = unpack_floats(parts[3]) if len(parts) > 3 and parts[3] else None
            token = self.rng.bytes(16)
            ct = encrypt_bytes(self.params, pub, token, self.rng)
            pend.update(token=token, position=position)
            payload = encode_parts([uid.encode(), tid.encode(), *_ct_parts(ct), pdig])
        self.pending[msg.sender] = pend
        self.send(msg.sender, MsgType.RegChallenge, payload, now, key=key)

    def _known_public(self, ep: Endpoint) -> int | None:
        uid = self.by_name.get((ep.role, ep.ident))
        return None if uid is None else self.records[uid].public_key

    def handle_RegConfirm(self, msg: AuthMessage, now: int) -> None:
        pend = self.pending.get(msg.sender)
        pub = pend["pub"] if pend is not None else self._known_public(msg.sender)
        reason = self.check(msg, now, None if pub is None else self.link_key_for_public(pub))
        if reason is not None:
            return self.reject(msg, reason)
        if pend is None:
            return self.reject(msg, Reason.Malformed, detail="no registration pending")
        uid, tid = pend["uid"], pend["tid"]
        if pend["role"] is Role.MU:
            expected = _h(b"mu-ack", pend["confirm"])
            ack = _h(b"mu-ack2", pend["confirm"], uid.encode())
            cred = _h(msg.sender.ident.encode(), pend["pwv"], pend["biov"])
        else:
            expected = _h(b"reg-confirm", pend["token"], uid.encode(), tid.encode(), params_digest(self.params))
            ack = _h(b"reg-ack", pend["token"], uid.encode())
            cred = _h(uid.encode(), int_bytes(pend["pub"]), pend["token"])
        if msg.payload != expected:
            del self.pending[msg.sender]
            return self.reject(msg, Reason.BadCredential, detail="confirmation mismatch")
        record = RegistrationRecord(
            entity=EntityId(pend["role"], uid, tid),
            public_key=pend["pub"],
            credential=Credential(cred),
            enrolled_at=now,
            security_level=pend.get("level", SecurityLevel.Medium),
            position_km=pend.get("position"),
            pw_verifier=pend.get("pwv", b""),
            bio_verifier=pend.get("biov", b""),
        )
        del self.pending[msg.sender]
        self.records[uid] = record
        self.by_name[(pend["role"], msg.sender.ident)] = uid
        self.peer_keys[Endpoint(pend["role"], uid)] = record.public_key
        self.log("record", role=pend["role"].value, unique_id=uid, level=record.security_level.value)
        if msg.sender.ident in self.enrollment and pend["role"] is Role.MU:
            self._enroll(uid, *self.enrollment[msg.sender.ident])
        self.send(msg.sender, MsgType.RegConfirm, ack, now, key=self.link_key_for_public(pend["pub"]))
        self._mirror(record, msg.sender.ident)

    def _enroll(self, uid: str, legit, negatives, seed: int) -> None:
        try:
            model = enroll(self.registry, uid, legit, negatives, self.forest_cfg, seed,
                           min_windows=self.auth_cfg.min_enroll_windows)
        except EnrollmentDataInsufficient as exc:
            self.log("enroll_failed", unique_id=uid, detail=str(exc))
            return
        self.log("enrolled", unique_id=uid, version=model.version, trees=model.n_trees)

    def _mirror(self, record: RegistrationRecord, label: str) -> None:
        # backhaul provisioning: MU and BS records go to satellites, satellite
        # records go to BSs; a newly registered node also receives existing peers
        role = record.entity.role
        targets = {Role.MU: (Role.Satellite,), Role.BS: (Role.Satellite,), Role.Satellite: (Role.BS,)}[role]
        for node in self.mirrors:
            if node.role in targets:
                node.install(record)
                self.log("mirror", to=node.label, unique_id=record.entity.unique_id)
        me = next((n for n in self.mirrors if n.role is role and n.label == label), None)
        if me is not None:
            wanted = (Role.BS, Role.MU) if role is Role.Satellite else (Role.Satellite,)
            for uid, other in sorted(self.records.items()):
                if other.entity.role in wanted:
                    me.install(other)

    def handle_FactorReport(self, msg: AuthMessage, now: int) -> None:
        reason = self.check(msg, now, self.link_key(msg.sender) if msg.sender.role is Role.Satellite else None)
        if reason is not None:
            return self.reject(msg, reason)
        uid_b, window_b, row_b = decode_parts(msg.payload)
        uid, window = uid_b.decode(), int.from_bytes(window_b, "big")
        record = self.records.get(uid)
        level = record.security_level if record else SecurityLevel.High
        try:
            dec = authenticate_window(self.registry, uid, FactorVector.from_row(unpack_floats(row_b)), level, window, self.auth_cfg)
            verdict, score = dec.verdict, dec.spoof_score
        except ModelMissing:
            verdict, score = Verdict.Deny, 1.0
            self.log("model_missing", unique_id=uid)
        self.log("decision", unique_id=uid, window=window, verdict=verdict.value, score=round(score, 6))
        payload = encode_parts([uid_b, window_b, verdict.value.encode(), pack_floats(score)])
        self.send(msg.sender, MsgType.Decision, payload, now)


class Satellite(_Infrastructure):
    role = Role.Satellite

    def __init__(self, label, params, keypair, rng, pcfg, ncc_public: int, geometry: Geometry):
        super().__init__(label, params, keypair, rng, pcfg, ncc_public)
        self.geometry = geometry
        self.mu_records: dict[str, RegistrationRecord] = {}
        self.bs_records: dict[Endpoint, RegistrationRecord] = {}
        self.sessions: dict[str, SessionState] = {}

    def install(self, record: RegistrationRecord) -> None:
        ent = record.entity
        if ent.role is Role.MU:
            self.mu_records[ent.temp_id] = record
            self.peer_keys[Endpoint(Role.MU, ent.temp_id)] = record.public_key
        elif ent.role is Role.BS:
            ep = Endpoint(Role.BS, ent.unique_id)
            self.bs_records[ep] = record
            self.peer_keys[ep] = record.public_key

    def handle_AuthRequest(self, msg: AuthMessage, now: int) -> None:
        if msg.sender.role is not Role.BS:
            return self.reject(msg, Reason.Malformed, detail="AuthRequest must arrive via a BS")
        reason = self.check(msg, now, self.link_key(msg.sender))
        if reason is not None:
            return self.reject(msg, reason)
        tag, inner_bytes = decode_parts(msg.payload)
        if tag != b"relay":
            raise MalformedMessage("bad relay tag")
        try:
            inner = AuthMessage.from_bytes(inner_bytes)
        except MalformedMessage as exc:
            return self.reject(msg, Reason.Malformed, detail=str(exc))
        if inner.msg_type is not MsgType.AuthRequest or not self.owns(inner.receiver):
            return self.reject(inner, Reason.Malformed, detail="relayed frame is not an AuthRequest for us")
        self._authenticate(inner, self.bs_records[msg.sender], now)

    def _authenticate(self, inner: AuthMessage, bs: RegistrationRecord, now: int) -> None:
        # ordered: freshness, identity, message credential, location, password, biometric
        record = self.mu_records.get(inner.sender.ident) if inner.sender.role is Role.MU else None
        key = None if record is None else self.link_key_for_public(record.public_key)
        reason = self.check(inner, now, key, unknown=Reason.BadIdentity)
        if reason is not None:
            return self.reject(inner, reason, flow="auth")
        pos_b, eph_b, sn_b, pw_proof, bio_proof = decode_parts(inner.payload)
        x, y = unpack_floats(pos_b)
        eph, sn = int.from_bytes(eph_b, "big"), int.from_bytes(sn_b, "big")
        if len(sn_b) != 8 or not 1 < eph < self.params.p - 1:
            raise MalformedMessage("bad session fields")
        bx, by = bs.position_km
        if not (math.hypot(x - bx, y - by) <= self.geometry.bs_coverage_km and in_beam(self.geometry, (x, y))):
            reason = Reason.BadLocation
        elif pw_proof != _h(b"pw-proof", record.pw_verifier, sn_b, eph_b):
            reason = Reason.BadPassword
        elif bio_proof != _h(b"bio-proof", record.bio_verifier, sn_b, eph_b):
            reason = Reason.BadBiometric
        tid = inner.sender.ident
        if reason is not None:
            self.sessions[tid] = SessionState(record.entity, SessionPhase.Rejected, sn, reason=reason, started_at=now)
            return self.reject(inner, reason, flow="auth", session_nonce=sn)
        ephemeral = keygen(self.params, self.rng, validate=False)
        skey = session_key(dh_shared(self.params, ephemeral.private, eph), sn, eph, ephemeral.public)
        self.sessions[tid] = SessionState(record.entity, SessionPhase.AwaitConfirm, sn, started_at=now, key=skey)
        self.log("state", flow="auth", peer=str(inner.sender), state="AwaitConfirm", session_nonce=sn)
        confirm = _h(b"sat-confirm", skey, sn_b)
        payload = encode_parts([int_bytes(ephemeral.public), sn_b, confirm])
        self.send(inner.sender, MsgType.AuthResponse, payload, now, key=key)

    def _session_for(self, msg: AuthMessage) -> SessionState | None:
        s = self.sessions.get(msg.sender.ident) if msg.sender.role is Role.MU else None
        return s if s is not None and s.key else None

    def handle_FactorReport(self, msg: AuthMessage, now: int) -> None:
        session = self._session_for(msg)
        reason = self.check(msg, now, None if session is None else session.key)
        if reason is not None:
            return self.reject(msg, reason)
        if session.state is SessionPhase.Rejected:
            return self.reject(msg, Reason.Denied, detail="session terminated")
        if session.state is SessionPhase.AwaitConfirm:
            # first message under the session key: the MU has proven the key
            session.state, session.established_at = SessionPhase.Authenticated, now
            self.log("state", flow="auth", peer=str(msg.sender), state="Authenticated", session_nonce=session.session_nonce)
        window_b, row_b = decode_parts(msg.payload)
        payload = encode_parts([session.peer.unique_id.encode(), window_b, row_b])
        self.send(NCC_ENDPOINT, MsgType.FactorReport, payload, now)

    def handle_Decision(self, msg: AuthMessage, now: int) -> None:
        reason = self.check(msg, now, self.link_key(msg.sender) if msg.sender == NCC_ENDPOINT else None)
        if reason is not None:
            return self.reject(msg, reason)
        uid_b, window_b, verdict_b, _score = decode_parts(msg.payload)
        uid = uid_b.decode()
        tid, session = next(((t, s) for t, s in self.sessions.items() if s.peer.unique_id == uid and s.key), (None, None))
        if session is None:
            return self.reject(msg, Reason.UnknownSender, detail="no session for decision")
        if verdict_b == Verdict.Deny.value.encode():
            session.state, session.reason = SessionPhase.Rejected, Reason.Denied
            self.log("state", flow="auth", peer=f"MU:{tid}", state="Rejected", reason="Denied")
        self.send(Endpoint(Role.MU, tid), MsgType.Decision, encode_parts([window_b, verdict_b]), now, key=session.key)

    def secrets(self):
        out = super().secrets()
        out += [(f"{self.label}.session.{t}", s.key) for t, s in sorted(self.sessions.items()) if s.key]
        return out


class BaseStation(_Infrastructure):
    role = Role.BS

    def __init__(self, label, params, keypair, rng, pcfg, ncc_public: int, position_km):
        super().__init__(label, params, keypair, rng, pcfg, ncc_public, position_km)
        self.satellites: list[Endpoint] = []

    def install(self, record: RegistrationRecord) -> None:
        if record.entity.role is Role.Satellite:
            ep = Endpoint(Role.Satellite, record.entity.unique_id)
            self.peer_keys[ep] = record.public_key
            if ep not in self.satellites:
                self.satellites.append(ep)

    def on_message(self, msg: AuthMessage, now: int) -> None:
        if self.owns(msg.receiver):
            return super().on_message(msg, now)
        # relay: an MU's AuthRequest is wrapped with this BS's own credential so the
        # satellite learns which BS serves the MU; everything else passes verbatim
        if msg.sender.role is Role.MU and msg.msg_type is MsgType.AuthRequest:
            key = self.link_key(msg.receiver) if self.registered else None
            if key is None:
                return self.reject(msg, Reason.UnknownSender, detail="no link to satellite")
            self.send(msg.receiver, MsgType.AuthRequest, encode_parts([b"relay", msg.to_bytes()]), now, key=key)
        elif self.net.next_hop(self, msg) is None:
            self.reject(msg, Reason.Malformed, detail="unroutable receiver")
        else:
            self.log("relay", type=msg.msg_type.name, to=str(msg.receiver))
            self.net.transmit(self, msg)


class MobileUser(Node):
    role = Role.MU

    def __init__(
        self,
        label: str,
        params,
        keypair,
        rng,
        pcfg: ProtocolConfig,
        ncc_public: int,
        *,
        password: str,
        template: BiometricTemplate,
        extractor: FuzzyExtractor,
        position_km,
        security_level: SecurityLevel = SecurityLevel.Medium,
    ):
        super().__init__(label, params, keypair, rng, pcfg)
        self.peer_keys[NCC_ENDPOINT] = ncc_public
        self.password = password
        self.template = template
        self.extractor = extractor
        self.position_km = (float(position_km[0]), float(position_km[1]))
        self.security_level = SecurityLevel(security_level)
        # what the user presents at authentication time
        self.attempt_password = password
        self.reading_flips: list[int] = []
        self.helper: bytes = b""
        self.identity: EntityId | None = None
        self.satellite: Endpoint | None = None
        self.reg = SessionState(peer=NCC_ENDPOINT)
        self.session: SessionState | None = None
        self.sessions: list[SessionState] = []
        self.reports: np.ndarray = np.zeros((0, 10))
        self.report_interval_ms = 30_000
        self._next_report = 0
        self._reg_secret: dict = {}
        self._eph: KeyPair | None = None
        self._spent: list[tuple[str, bytes]] = []

    @property
    def registered(self) -> bool:
        # a later, failed attempt (e.g. a duplicate) leaves an earlier registration intact
        return self.identity is not None

    def owns(self, ep: Endpoint) -> bool:
        return ep == self.endpoint or ep == self.name_endpoint

    # -- registration --------------------------------------------------------

    def start_registration(self, now: int) -> None:
        fkey, helper = self.extractor.gen(self.template, self.rng)
        pwv = pw_verifier(self.label, self.password)
        biov = bio_verifier(self.label, fkey)
        # the helper string is only kept once the NCC confirms
        self._reg_secret = {"pwv": pwv, "biov": biov, "helper": helper}
        self._spent.append((f"{self.label}.fuzzy_key", fkey))
        ncc_pub = self.peer_keys[NCC_ENDPOINT]
        ct_pw = encrypt_bytes(self.params, ncc_pub, pwv, self.rng)
        ct_bio = encrypt_bytes(self.params, ncc_pub, biov, self.rng)
        payload = encode_parts([
            b"MU", self.label.encode(), int_bytes(self.keypair.public),
            *_ct_parts(ct_pw), *_ct_parts(ct_bio), self.security_level.value.encode(),
        ])
        self.reg = SessionState(peer=NCC_ENDPOINT, state=SessionPhase.AwaitChallenge, started_at=now)
        msg = self.send(NCC_ENDPOINT, MsgType.RegRequest, payload, now, sender=self.name_endpoint)
        self.reg.request_nonce = msg.nonce
        self.log("state", flow="registration", state=self.reg.state.value)
        self.net.set_timer(self, "reg", now + self.timeout_ms)

    def _abort_registration(self, msg: AuthMessage, detail: str) -> None:
        self.reg.state, self.reg.reason = SessionPhase.Rejected, Reason.BadCredential
        self._reg_secret = {}
        self.reject(msg, Reason.BadCredential, detail=detail)
        self.log("state", flow="registration", state="Rejected", reason="BadCredential")

    def handle_RegChallenge(self, msg: AuthMessage, now: int) -> None:
        reason = self.check(msg, now, self.link_key(msg.sender) if msg.sender == NCC_ENDPOINT else None)
        if reason is not None:
            return self.reject(msg, reason)
        if self.reg.state is not SessionPhase.AwaitChallenge:
            return self.reject(msg, Reason.Malformed, detail="no registration in progress")
        uid, tid, confirm, sat_uid, sat_pub = decode_parts(msg.payload)
        sec = self._reg_secret
        expected = _h(b"mu-confirm", self.label.encode(), uid, tid, sec["pwv"], sec["biov"], params_digest(self.params))
        if confirm != expected:
            return self._abort_registration(msg, "confirmation hash mismatch")
        sec.update(uid=uid.decode(), tid=tid.decode(), confirm=confirm, sat_uid=sat_uid.decode(), sat_pub=int.from_bytes(sat_pub, "big"))
        self.reg.state = SessionPhase.AwaitConfirm
        self.send(NCC_ENDPOINT, MsgType.RegConfirm, _h(b"mu-ack", confirm), now, sender=self.name_endpoint)

    def handle_RegConfirm(self, msg: AuthMessage, now: int) -> None:
        reason = self.check(msg, now, self.link_key(msg.sender) if msg.sender == NCC_ENDPOINT else None)
        if reason is not None:
            return self.reject(msg, reason)
        sec = self._reg_secret
        if self.reg.state is not SessionPhase.AwaitConfirm:
            return self.reject(msg, Reason.Malformed, detail="no confirmation pending")
        if msg.payload != _h(b"mu-ack2", sec["confirm"], sec["uid"].encode()):
            return self._abort_registration(msg, "ack mismatch")
        self.helper = sec["helper"]
        self.identity = EntityId(Role.MU, sec["uid"], sec["tid"])
        self.endpoint = Endpoint(Role.MU, sec["tid"])
        self.net.alias(self, self.endpoint)
        if sec["sat_uid"]:
            self.satellite = Endpoint(Role.Satellite, sec["sat_uid"])
            self.peer_keys[self.satellite] = sec["sat_pub"]
        self._reg_secret = {}
        self.reg.state, self.reg.established_at = SessionPhase.Authenticated, now
        self.log("registered", unique_id=self.identity.unique_id, latency_ms=now - self.reg.started_at)

    # -- one-shot authentication ---------------------------------------------

    def start_auth(self, now: int, session_id: str) -> SessionState | None:
        if not self.registered or self.satellite is None:
            self.log("skip", flow="auth", session_id=session_id, detail="not registered")
            return None
        self._eph = keygen(self.params, self.rng, validate=False)
        sn = self.next_nonce()
        sn_b, eph_b = u64(sn), int_bytes(self._eph.public)
        reading = self.template.flipped(self.reading_flips)
        fkey = self.extractor.rep(reading, self.helper) or b""
        pw_proof = _h(b"pw-proof", pw_verifier(self.label, self.attempt_password), sn_b, eph_b)
        bio_proof = _h(b"bio-proof", bio_verifier(self.label, fkey), sn_b, eph_b)
        payload = encode_parts([pack_floats(*self.position_km), eph_b, sn_b, pw_proof, bio_proof])
        self.session = SessionState(
            peer=self.satellite, state=SessionPhase.AwaitConfirm, session_nonce=sn, session_id=session_id, started_at=now
        )
        self.sessions.append(self.session)
        self._spent.append((f"{self.label}.eph.{session_id}", int_bytes(self._eph.private)))
        msg = self.send(self.satellite, MsgType.AuthRequest, payload, now)
        self.session.request_nonce = msg.nonce
        self.log("state", flow="auth", session_id=session_id, state="AwaitConfirm", session_nonce=sn)
        self.net.set_timer(self, f"auth:{session_id}", now + self.timeout_ms)
        return self.session

    def handle_AuthResponse(self, msg: AuthMessage, now: int) -> None:
        s = self.session
        reason = self.check(msg, now, self.link_key(msg.sender) if msg.sender == self.satellite else None)
        if reason is not None:
            return self.reject(msg, reason)
        if s is None or s.state is not SessionPhase.AwaitConfirm:
            return self.reject(msg, Reason.Malformed, detail="no session awaiting a response")
        eph_b, sn_b, confirm = decode_parts(msg.payload)
        sat_eph = int.from_bytes(eph_b, "big")
        if sn_b != u64(s.session_nonce) or not 1 < sat_eph < self.params.p - 1:
            return self._fail(msg, Reason.BadCredential, "session nonce mismatch")
        skey = session_key(dh_shared(self.params, self._eph.private, sat_eph), s.session_nonce, self._eph.public, sat_eph)
        if confirm != _h(b"sat-confirm", skey, sn_b):
            return self._fail(msg, Reason.BadCredential, "key confirmation mismatch")
        self._eph = None
        s.key = skey
        s.state, s.established_at = SessionPhase.Authenticated, now
        self.log(
            "state", flow="auth", session_id=s.session_id, state="Authenticated",
            endpoint=str(self.endpoint), latency_ms=now - s.started_at,
        )
        if len(self.reports):
            self._next_report = 0
            self.net.set_timer(self, f"report:{s.session_id}", now + self.report_interval_ms)

    def _fail(self, msg: AuthMessage, reason: Reason, detail: str) -> None:
        self.session.state, self.session.reason = SessionPhase.Rejected, reason
        self.reject(msg, reason, detail=detail)
        self.log("state", flow="auth", session_id=self.session.session_id, state="Rejected", reason=reason.value)

    def on_timer(self, token: str, now: int) -> None:
        kind, _, sid = token.partition(":")
        if kind == "reg" and not self.reg.terminal:
            self.reg.state, self.reg.reason = SessionPhase.Rejected, Reason.Timeout
            self.log("timeout", flow="registration")
        elif kind == "auth" and self.session is not None and self.session.session_id == sid:
            if self.session.state is SessionPhase.AwaitConfirm:
                self.session.state, self.session.reason = SessionPhase.Rejected, Reason.Timeout
                self.log("timeout", flow="auth", session_id=sid)
        elif kind == "report":
            self._send_report(now, sid)

    # -- continuous (Phase II) reporting ---------------------------------------

    def _send_report(self, now: int, sid: str) -> None:
        s = self.session
        if s is None or s.session_id != sid or s.state is not SessionPhase.Authenticated:
            return
        if self._next_report >= len(self.reports):
            return
        w = self._next_report
        payload = encode_parts([w.to_bytes(4, "big"), pack_floats(*self.reports[w])])
        self.send(self.satellite, MsgType.FactorReport, payload, now, key=s.key)
        self._next_report += 1

    def handle_Decision(self, msg: AuthMessage, now: int) -> None:
        s = self.session
        key = s.key if s is not None and msg.sender == self.satellite else None
        reason = self.check(msg, now, key or None)
        if reason is not None:
            return self.reject(msg, reason)
        window_b, verdict_b = decode_parts(msg.payload)
        window = int.from_bytes(window_b, "big")
        self.log("decision", session_id=s.session_id, window=window, verdict=verdict_b.decode())
        if verdict_b == Verdict.Deny.value.encode():
            s.state, s.reason = SessionPhase.Rejected, Reason.Denied
            self.log("state", flow="auth", session_id=s.session_id, state="Rejected", reason="Denied")
        elif s.state is SessionPhase.Authenticated:
            self.net.set_timer(self, f"report:{s.session_id}", now + self.report_interval_ms)

    def secrets(self):
        out = super().secrets()
        out.append((f"{self.label}.password", self.password.encode()))
        if self.attempt_password != self.password:
            out.append((f"{self.label}.attempt_password", self.attempt_password.encode()))
        out += self._spent
        out += [(f"{self.label}.session.{s.session_id}", s.key) for s in self.sessions if s.key]
        return out
