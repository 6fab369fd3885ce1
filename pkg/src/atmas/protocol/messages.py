"""Wire format, credentials and per-message verification for Phase I."""

from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum, IntEnum

from atmas.crypto import HASH_WIDTH, Credential, check_freshness, decode_parts, encode_parts, hash_credential

WIRE_MAGIC = b"ATMAS/1"
_N_PARTS = 10
# part index of each named field in the framed message
FIELD_INDEX = {
    "magic": 0,
    "sender_role": 1,
    "sender": 2,
    "receiver_role": 3,
    "receiver": 4,
    "type": 5,
    "timestamp": 6,
    "nonce": 7,
    "payload": 8,
    "credential": 9,
}


class Role(str, Enum):
    MU = "MU"
    BS = "BS"
    Satellite = "Satellite"
    NCC = "NCC"


class MsgType(IntEnum):
    RegRequest = 1
    RegChallenge = 2
    RegConfirm = 3
    AuthRequest = 4
    AuthResponse = 5
    ContAuthRequest = 6
    FactorReport = 7
    Decision = 8


class Reason(str, Enum):
    Stale = "Stale"
    ReplayedNonce = "ReplayedNonce"
    BadCredential = "BadCredential"
    UnknownSender = "UnknownSender"
    Malformed = "Malformed"
    BadIdentity = "BadIdentity"
    BadLocation = "BadLocation"
    BadPassword = "BadPassword"
    BadBiometric = "BadBiometric"
    DuplicateIdentity = "DuplicateIdentity"
    Timeout = "Timeout"
    Denied = "Denied"


class MalformedMessage(ValueError):
    pass


@dataclass(frozen=True)
class Endpoint:
    """On-wire address: a role plus whichever identifier the peer knows."""

    role: Role
    ident: str

    def __str__(self) -> str:
        return f"{self.role.value}:{self.ident}"


@dataclass(frozen=True)
class EntityId:
    role: Role
    unique_id: str
    temp_id: str

    def __post_init__(self):
        if self.temp_id == self.unique_id:
            raise ValueError("temp_id must differ from unique_id")


def u64(value: int) -> bytes:
    return int(value).to_bytes(8, "big")


def int_bytes(value: int) -> bytes:
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")


def pack_floats(*values: float) -> bytes:
    return struct.pack(f">{len(values)}d", *values)


def unpack_floats(data: bytes) -> tuple[float, ...]:
    if len(data) % 8:
        raise MalformedMessage("float block length is not a multiple of 8")
    return struct.unpack(f">{len(data) // 8}d", data)


@dataclass(frozen=True)
class AuthMessage:
    sender: Endpoint
    receiver: Endpoint
    msg_type: MsgType
    timestamp: int  # ms, set at send time
    nonce: int  # u64
    payload: bytes
    credential: Credential

    def signed_parts(self) -> list[bytes]:
        return [
            WIRE_MAGIC,
            self.sender.role.value.encode(),
            self.sender.ident.encode(),
            self.receiver.role.value.encode(),
            self.receiver.ident.encode(),
            bytes([int(self.msg_type)]),
            u64(self.timestamp),
            u64(self.nonce),
            self.payload,
        ]

    def to_bytes(self) -> bytes:
        return encode_parts([*self.signed_parts(), self.credential.digest])

    @classmethod
    def from_bytes(cls, data: bytes) -> "AuthMessage":
        """Strict parser: anything that would not re-serialize identically is rejected."""
        try:
            parts = decode_parts(data)
        except ValueError as exc:
            raise MalformedMessage(str(exc)) from exc
        if len(parts) != _N_PARTS or parts[0] != WIRE_MAGIC:
            raise MalformedMessage("bad frame layout")
        _, srole, sid, rrole, rid, mtype, ts, nonce, payload, cred = parts
        if len(mtype) != 1 or len(ts) != 8 or len(nonce) != 8 or len(cred) != HASH_WIDTH:
            raise MalformedMessage("bad fixed-width field")
        try:
            sender = Endpoint(Role(srole.decode()), sid.decode())
            receiver = Endpoint(Role(rrole.decode()), rid.decode())
            msg_type = MsgType(mtype[0])
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedMessage(str(exc)) from exc
        return cls(
            sender, receiver, msg_type,
            int.from_bytes(ts, "big"), int.from_bytes(nonce, "big"),
            payload, Credential(cred),
        )


def message_credential(parts: list[bytes], link_key: bytes) -> Credential:
    return hash_credential([b"msg", *parts, link_key])


def seal(
    sender: Endpoint,
    receiver: Endpoint,
    msg_type: MsgType,
    timestamp: int,
    nonce: int,
    payload: bytes,
    link_key: bytes,
) -> AuthMessage:
    draft = AuthMessage(sender, receiver, msg_type, timestamp, nonce, payload, Credential(bytes(HASH_WIDTH)))
    cred = message_credential(draft.signed_parts(), link_key)
    return AuthMessage(sender, receiver, msg_type, timestamp, nonce, payload, cred)


def field_spans(data: bytes) -> dict[str, tuple[int, int]]:
    """Byte ranges ``[start, end)`` of each named field inside a framed message."""
    spans = {}
    names = {v: k for k, v in FIELD_INDEX.items()}
    i = 0
    for idx in range(_N_PARTS):
        size = int.from_bytes(data[i : i + 4], "big")
        spans[names[idx]] = (i + 4, i + 4 + size)
        i += 4 + size
    spans["frame"] = (0, len(data))
    return spans


class NonceCache:
    """Per-peer bounded LRU of nonces already accepted."""

    def __init__(self, capacity: int = 4096):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._seen: dict[str, OrderedDict] = {}

    def seen(self, peer: str, nonce: int) -> bool:
        entries = self._seen.get(peer)
        if entries is None or nonce not in entries:
            return False
        entries.move_to_end(nonce)
        return True

    def record(self, peer: str, nonce: int) -> None:
        entries = self._seen.setdefault(peer, OrderedDict())
        entries[nonce] = None
        entries.move_to_end(nonce)
        while len(entries) > self.capacity:
            entries.popitem(last=False)

    def __len__(self) -> int:
        return sum(len(v) for v in self._seen.values())


def verify_message(
    msg: AuthMessage,
    link_key: bytes | None,
    now: int,
    threshold_ms: int,
    cache: NonceCache,
    unknown: Reason = Reason.UnknownSender,
) -> Reason | None:
    """Return ``None`` on acceptance, otherwise the first failing reason.

    Order: freshness, sender lookup, nonce reuse, credential. The nonce is
    only recorded once the credential verifies, so a forged copy cannot
    poison the cache for the genuine message.
    """
    if not check_freshness(msg.timestamp, now, threshold_ms):
        return Reason.Stale
    if link_key is None:
        return unknown
    peer = str(msg.sender)
    if cache.seen(peer, msg.nonce):
        return Reason.ReplayedNonce
    if message_credential(msg.signed_parts(), link_key) != msg.credential:
        return Reason.BadCredential
    cache.record(peer, msg.nonce)
    return None
