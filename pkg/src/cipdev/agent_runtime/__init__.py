"""Four-agent device runtime: message bus, shared device state, agents."""

from .bus import (
    AGENT_NAMES, Kind, Envelope, BusClosed, UnknownAgent, MessageBus,
    PatientIdentifiedPayload, TestResultPayload,
    SupplementaryRequestPayload, SupplementaryResponsePayload,
)
from .state import (
    AlarmEvent, DeviceState, UnknownAlarmId, AlreadyAcknowledged,
    NoCurrentPatient,
)
from .agents import (
    AgentSystem, PatientAgent, BiometricAgent, PhysicianAgent, SimopacAgent,
    StalePatient, TagWriteFailed, SimopacEndpoint,
)

__all__ = [
    "AGENT_NAMES", "Kind", "Envelope", "BusClosed", "UnknownAgent",
    "MessageBus", "PatientIdentifiedPayload", "TestResultPayload",
    "SupplementaryRequestPayload", "SupplementaryResponsePayload",
    "AlarmEvent", "DeviceState", "UnknownAlarmId", "AlreadyAcknowledged",
    "NoCurrentPatient", "AgentSystem", "PatientAgent", "BiometricAgent",
    "PhysicianAgent", "SimopacAgent", "StalePatient", "TagWriteFailed",
    "SimopacEndpoint",
]
