"""Deterministic event loop and channel model connecting protocol entities."""

from __future__ import annotations

import hashlib
import heapq
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np

from atmas.config import ChannelConfig
from atmas.protocol.messages import AuthMessage, Endpoint, Role

logger = logging.getLogger(__name__)


class EventKind(str, Enum):
    Deliver = "Deliver"
    Drop = "Drop"
    Tick = "Tick"
    AdversaryAction = "AdversaryAction"


@dataclass(frozen=True, order=True)
class SimEvent:
    at: int
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False)


def frame_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]


@dataclass(frozen=True)
class ChannelModel:
    mu_bs_ms: int = 2
    bs_sat_ms: int = 15
    sat_ncc_ms: int = 15
    jitter_ms: int = 3
    loss_prob: float = 0.0

    def __post_init__(self):
        if min(self.mu_bs_ms, self.bs_sat_ms, self.sat_ncc_ms, self.jitter_ms) < 0:
            raise ValueError("delays must be >= 0")
        if not 0 <= self.loss_prob <= 1:
            raise ValueError("loss_prob must lie in [0, 1]")

    @classmethod
    def from_config(cls, cfg: ChannelConfig) -> "ChannelModel":
        return cls(
            round(cfg.mu_bs_ms), round(cfg.bs_sat_ms), round(cfg.sat_ncc_ms), round(cfg.jitter_ms), cfg.loss_prob
        )

    def base_delay(self, a: Role, b: Role) -> int:
        pair = frozenset((a, b))
        if pair == {Role.MU, Role.BS}:
            return self.mu_bs_ms
        if pair == {Role.BS, Role.Satellite}:
            return self.bs_sat_ms
        if pair == {Role.Satellite, Role.NCC}:
            return self.sat_ncc_ms
        if pair == {Role.BS, Role.NCC}:
            # BS backhaul to the NCC rides the satellite
            return self.bs_sat_ms + self.sat_ncc_ms
        raise ValueError(f"no link between {a.value} and {b.value}")

    def sample(self, a: Role, b: Role, rng: np.random.Generator) -> int:
        d = self.base_delay(a, b)
        if self.jitter_ms:
            d += int(rng.integers(-self.jitter_ms, self.jitter_ms + 1))
        return max(d, 0)


class Network:
    """Single-threaded discrete-event loop.

    Events run in ``(time, insertion sequence)`` order, so equal-time events
    are processed in the order they were scheduled. Every observable action
    is appended to ``events`` as a flat dict; that list is the event log.
    """

    def __init__(self, channel: ChannelModel, rng: np.random.Generator, adversary=None):
        self.channel = channel
        self.rng = rng
        self.adversary = adversary
        if adversary is not None:
            adversary.net = self
        self.now = 0
        self.events: list[dict] = []
        self.nodes: dict[str, Any] = {}
        self.directory: dict[Endpoint, Any] = {}
        self.attached: dict[str, Any] = {}
        self.frames: list[bytes] = []
        self._queue: list[SimEvent] = []
        self._seq = 0

    # -- topology --------------------------------------------------------------

    def add(self, node) -> None:
        if node.label in self.nodes:
            raise ValueError(f"duplicate node label {node.label}")
        self.nodes[node.label] = node
        self.directory[node.endpoint] = node
        node.net = self

    def alias(self, node, ep: Endpoint) -> None:
        self.directory[ep] = node

    def attach(self, mu, bs) -> None:
        self.attached[mu.label] = bs

    def idents_of(self, label: str) -> set[str]:
        return {ep.ident for ep, n in self.directory.items() if n.label == label}

    # -- logging ---------------------------------------------------------------

    def log(self, ev: str, **fields) -> None:
        self.events.append({"t": self.now, "ev": ev, **fields})

    # -- scheduling --------------------------------------------------------------

    def _push(self, at: int, kind: EventKind, payload) -> None:
        heapq.heappush(self._queue, SimEvent(int(at), self._seq, kind, payload))
        self._seq += 1

    def set_timer(self, node, token: str, at: int) -> None:
        self._push(at, EventKind.Tick, (node.label, token))

    def command(self, at: int, label: str, action: str, *args) -> None:
        """Schedule an entity action such as starting a registration."""
        self._push(at, EventKind.AdversaryAction if label == "adversary" else EventKind.Tick, (label, ("cmd", action, args)))

    def next_hop(self, src, msg: AuthMessage):
        dst = self.directory.get(msg.receiver)
        if dst is None:
            return None
        if src.role is Role.MU:
            return self.attached.get(src.label)
        if dst.role is Role.MU and self.attached.get(dst.label) is not src:
            return self.attached.get(dst.label)
        return dst

    def transmit(self, src, msg: AuthMessage) -> None:
        data = msg.to_bytes()
        hop = self.next_hop(src, msg)
        if hop is None:
            self.log("undeliverable", frm=src.label, to=str(msg.receiver), type=msg.msg_type.name)
            return
        self.log("send", frm=src.label, to=hop.label, type=msg.msg_type.name, size=len(data), frame=frame_digest(data))
        frames = [(data, 0)]
        if self.adversary is not None:
            frames = self.adversary.intercept(self, src, hop, msg, data)
        for frame, extra in frames:
            self._launch(src.role, hop, frame, extra, src.label)

    def _launch(self, src_role: Role, hop, data: bytes, extra_ms: int, src_label: str) -> None:
        self.frames.append(data)
        if self.channel.loss_prob > 0 and self.rng.random() < self.channel.loss_prob:
            self.log("drop", frm=src_label, to=hop.label, frame=frame_digest(data))
            return
        delay = self.channel.sample(src_role, hop.role, self.rng) + int(extra_ms)
        self._push(self.now + delay, EventKind.Deliver, (hop.label, data, src_label))

    def inject(self, hop, data: bytes, delay_ms: int, src_label: str = "adversary") -> None:
        """Deliver an adversary-crafted frame to ``hop`` after ``delay_ms``."""
        self.frames.append(data)
        self._push(self.now + max(int(delay_ms), 0), EventKind.Deliver, (hop.label, data, src_label))

    # -- running -----------------------------------------------------------------

    def pending(self) -> int:
        return len(self._queue)

    def peek(self) -> SimEvent | None:
        return self._queue[0] if self._queue else None

    def rewrite_next(self, data: bytes) -> None:
        """Swap the frame of the next pending delivery (in-flight tamper harness)."""
        ev = self._queue[0]
        if ev.kind is not EventKind.Deliver:
            raise ValueError("next event is not a delivery")
        label, _, src_label = ev.payload
        # same (at, seq) key, so the heap invariant holds
        self._queue[0] = SimEvent(ev.at, ev.seq, ev.kind, (label, data, src_label))

    def step(self) -> SimEvent | None:
        if not self._queue:
            return None
        ev = heapq.heappop(self._queue)
        self.now = ev.at
        label, rest = ev.payload[0], ev.payload[1:]
        if ev.kind is EventKind.Deliver:
            data, src_label = rest
            self.log("deliver", node=label, frm=src_label, frame=frame_digest(data))
            self.nodes[label].deliver(data, self.now)
        else:
            (token,) = rest
            target = self.adversary if label == "adversary" else self.nodes[label]
            if isinstance(token, tuple):
                _, action, args = token
                getattr(target, action)(self.now, *args)
            else:
                target.on_timer(token, self.now)
        return ev

    def run(self, until: int | None = None, stop: Callable[[], bool] | None = None) -> None:
        while self._queue:
            if until is not None and self._queue[0].at > until:
                break
            self.step()
            if stop is not None and stop():
                break
