"""Phase I protocol: wire messages, verification and entity state machines."""

from atmas.protocol.entities import (
    NCC,
    BaseStation,
    MobileUser,
    RegistrationRecord,
    Satellite,
    SessionPhase,
    SessionState,
    rotate_temp_id,
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
    verify_message,
)
