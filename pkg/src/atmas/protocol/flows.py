"""Drive single Phase I flows to completion on a :class:`~atmas.sim.network.Network`."""

from __future__ import annotations

from dataclasses import dataclass

from atmas.protocol.entities import NCC, MobileUser, RegistrationRecord, SessionPhase, SessionState
from atmas.protocol.messages import Reason


@dataclass(frozen=True)
class RegistrationOutcome:
    record: RegistrationRecord | None
    reason: Reason | None

    @property
    def ok(self) -> bool:
        return self.record is not None


def _first_reject(net, since: int, node_label: str, peers: set[str]) -> Reason | None:
    for e in net.events[since:]:
        if e["ev"] == "reject" and e["node"] == node_label and e.get("peer") in peers:
            return Reason(e["reason"])
    return None


def _register(entity, ncc: NCC, net) -> RegistrationOutcome:
    since = len(net.events)
    peers = {str(entity.endpoint), str(entity.name_endpoint)}
    entity.start_registration(net.now)
    net.run(stop=lambda: entity.reg.terminal)
    if entity.reg.state is SessionPhase.Authenticated:
        return RegistrationOutcome(ncc.records[entity.identity.unique_id], None)
    reason = _first_reject(net, since, ncc.label, peers) or _first_reject(net, since, entity.label, {str(ncc.endpoint)})
    return RegistrationOutcome(None, reason or entity.reg.reason)


def register_infrastructure(entity, ncc: NCC, net) -> RegistrationOutcome:
    """Register a BS or satellite; returns the NCC's record or the rejection reason."""
    return _register(entity, ncc, net)


def register_mu(mu: MobileUser, ncc: NCC, net) -> RegistrationOutcome:
    return _register(mu, ncc, net)


def one_shot_authenticate(mu: MobileUser, satellite, net, session_id: str | None = None) -> SessionState:
    """Run one authentication; a rejected session carries the satellite's first failing check."""
    since = len(net.events)
    sid = session_id or f"{mu.label}-s{len(mu.sessions)}"
    session = mu.start_auth(net.now, sid)
    if session is None:
        return SessionState(peer=None, state=SessionPhase.Rejected, session_id=sid, reason=Reason.UnknownSender)
    net.run(stop=lambda: session.terminal)
    if session.state is SessionPhase.Rejected and session.reason is Reason.Timeout:
        reason = _first_reject(net, since, satellite.label, {str(mu.endpoint)})
        if reason is not None:
            session.reason = reason
    return session
