"""Man-in-the-middle adversary scripts.

The adversary sits on every link. It sees each transmitted frame (its
knowledge set) and may replay, tamper with, drop or forge frames, but never
reads entity state.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from atmas.config import AdversarySpec
from atmas.crypto import GroupParams, dh_shared, encode_parts, encrypt_bytes, keygen
from atmas.protocol.messages import AuthMessage, Endpoint, MsgType, Role, field_spans, int_bytes, seal
from atmas.sim.network import frame_digest

TAMPER_FIELDS = ("payload", "timestamp", "nonce", "credential", "sender", "receiver", "type", "frame")
IMPERSONATE_MODES = ("forge", "duplicate")


def flip_bit(data: bytes, bit: int) -> bytes:
    out = bytearray(data)
    out[bit // 8] ^= 0x80 >> (bit % 8)
    return bytes(out)


class Adversary:
    def __init__(self, scripts: Sequence[AdversarySpec], rng: np.random.Generator, params: GroupParams, ncc_public: int):
        for s in scripts:
            if s.kind == "Tamper" and s.field not in TAMPER_FIELDS:
                raise ValueError(f"unknown tamper field {s.field!r}")
            if s.kind == "Impersonate" and s.mode not in IMPERSONATE_MODES:
                raise ValueError(f"unknown impersonation mode {s.mode!r}")
        self.scripts = list(scripts)
        self.rng = rng
        self.params = params
        self.ncc_public = ncc_public
        self.keypair = keygen(params, rng, validate=False)
        self.knowledge: list[bytes] = []
        self._counts = [0] * len(self.scripts)
        self.net = None

    def _matches(self, net, spec: AdversarySpec, msg: AuthMessage) -> bool:
        if spec.kind == "Eavesdrop" or msg.msg_type.name != spec.target:
            return False
        if spec.mu is None:
            return True
        idents = net.idents_of(spec.mu)
        return msg.sender.ident in idents or msg.receiver.ident in idents

    def intercept(self, net, src, hop, msg: AuthMessage, data: bytes) -> list[tuple[bytes, int]]:
        self.knowledge.append(data)
        out = [(data, 0)]
        for i, spec in enumerate(self.scripts):
            if not self._matches(net, spec, msg):
                continue
            k = self._counts[i]
            self._counts[i] += 1
            if k == spec.occurrence:
                out = self._act(net, spec, msg, data, hop, out)
        return out

    def _act(self, net, spec: AdversarySpec, msg: AuthMessage, data: bytes, hop, out):
        info = {"kind": spec.kind, "target": spec.target, "occurrence": spec.occurrence, "frame": frame_digest(data)}
        if spec.kind == "Replay":
            net.log("adversary", action="replay", delay_ms=spec.delay_ms, **info)
            return out + [(data, spec.delay_ms)]
        if spec.kind == "Tamper":
            lo, hi = field_spans(data)[spec.field]
            nbits = (hi - lo) * 8
            if nbits == 0:
                net.log("adversary", action="tamper-skip", field=spec.field, **info)
                return out
            bit = spec.bit if spec.bit is not None else int(self.rng.integers(nbits))
            tampered = flip_bit(data, lo * 8 + bit % nbits)
            net.log("adversary", action="tamper", field=spec.field, bit=bit % nbits, tampered=frame_digest(tampered), **info)
            return [(tampered, 0)]
        if spec.mode == "forge":
            fake = Endpoint(msg.sender.role, "adv-" + self.rng.bytes(4).hex())
            forged = seal(fake, msg.receiver, msg.msg_type, net.now, int.from_bytes(self.rng.bytes(8), "big"),
                          msg.payload, self.rng.bytes(32)).to_bytes()
            net.log("adversary", action="forge", forged=frame_digest(forged), **info)
            return [(forged, 0)]
        # duplicate: register the victim's identity under the adversary's own keys
        victim = spec.mu if spec.mu is not None else msg.sender.ident
        net.log("adversary", action="duplicate-registration", victim=victim, **info)
        net.command(net.now + max(spec.delay_ms, 1), "adversary", "register_as", victim)
        return out

    def register_as(self, now: int, victim: str) -> None:
        from atmas.protocol.entities import NCC_ENDPOINT

        net = self.net
        cts = []
        for _ in range(2):
            ct = encrypt_bytes(self.params, self.ncc_public, self.rng.bytes(32), self.rng)
            cts += [int_bytes(ct.c1), int_bytes(ct.c2)]
        payload = encode_parts([b"MU", victim.encode(), int_bytes(self.keypair.public), *cts, b"Medium"])
        key = dh_shared(self.params, self.keypair.private, self.ncc_public)
        msg = seal(Endpoint(Role.MU, victim), NCC_ENDPOINT, MsgType.RegRequest, now,
                   int.from_bytes(self.rng.bytes(8), "big"), payload, key)
        data = msg.to_bytes()
        self.knowledge.append(data)
        ncc = net.directory[NCC_ENDPOINT]
        net.log("adversary", action="inject", type="RegRequest", frame=frame_digest(data))
        net.inject(ncc, data, net.channel.bs_sat_ms + net.channel.sat_ncc_ms)

    def leaks(self, secrets: Sequence[tuple[str, bytes]]) -> list[str]:
        """Names of secrets whose bytes occur anywhere in the knowledge set."""
        found = []
        for name, value in secrets:
            if value and any(value in frame for frame in self.knowledge):
                found.append(name)
        return found
