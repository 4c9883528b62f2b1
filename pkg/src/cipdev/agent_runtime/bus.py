"""In-process message bus with typed envelopes.

Delivery is by kind subscription with per-sender FIFO and at-most-once
semantics. Two execution modes share one implementation: worker threads
(one per agent, live operation) or explicit step()/run_until_idle()
single-scheduler execution for deterministic tests.
"""

from __future__ import annotations

import enum
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass

from ..cip_codec import CipCard
from ..vitals import BiometricResult
from .state import AlarmEvent

logger = logging.getLogger(__name__)

AGENT_NAMES = ("patient", "biometric", "physician", "simopac")


class BusError(Exception):
    pass


class BusClosed(BusError):
    pass


class UnknownAgent(BusError):
    pass


class Kind(enum.Enum):
    PATIENT_IDENTIFIED = "PatientIdentified"
    RESULTS_AVAILABLE = "ResultsAvailable"
    TEST_RESULT = "TestResult"
    ALARM = "Alarm"
    SUPPLEMENTARY_REQUEST = "SupplementaryRequest"
    SUPPLEMENTARY_RESPONSE = "SupplementaryResponse"
    CARD_UPDATED = "CardUpdated"


@dataclass(frozen=True)
class PatientIdentifiedPayload:
    serial: int
    card: CipCard


@dataclass(frozen=True)
class TestResultPayload:
    card: CipCard
    result: BiometricResult


@dataclass(frozen=True)
class SupplementaryRequestPayload:
    request_id: int
    serial: int
    language: str
    server_uri: str


@dataclass(frozen=True)
class SupplementaryResponsePayload:
    request_id: int
    serial: int
    ok: bool
    record: dict | None = None
    cause: str | None = None


_PAYLOAD_TYPES = {
    Kind.PATIENT_IDENTIFIED: PatientIdentifiedPayload,
    Kind.RESULTS_AVAILABLE: BiometricResult,
    Kind.TEST_RESULT: TestResultPayload,
    Kind.ALARM: AlarmEvent,
    Kind.SUPPLEMENTARY_REQUEST: SupplementaryRequestPayload,
    Kind.SUPPLEMENTARY_RESPONSE: SupplementaryResponsePayload,
    Kind.CARD_UPDATED: CipCard,
}


@dataclass(frozen=True)
class Envelope:
    id: int
    sender: str
    recipient: str
    kind: Kind
    payload: object
    timestamp: int


class MessageBus:
    def __init__(self, clock=time.time):
        self._mailboxes: dict[str, deque[Envelope]] = {}
        self._handlers: dict[str, object] = {}
        self._subscriptions: dict[str, set[Kind]] = {}
        self._order: list[str] = []
        self._next_id = 1
        self._cv = threading.Condition()
        self._closed = False
        self._clock = clock
        self._threads: list[threading.Thread] = []

    def register(self, name: str, handler) -> None:
        with self._cv:
            if name in self._mailboxes:
                raise BusError(f"agent {name!r} already registered")
            self._mailboxes[name] = deque()
            self._handlers[name] = handler
            self._subscriptions[name] = set()
            self._order.append(name)

    def subscribe(self, name: str, kinds) -> None:
        with self._cv:
            if name not in self._mailboxes:
                raise UnknownAgent(name)
            self._subscriptions[name].update(kinds)

    def send(self, sender: str, recipient: str, kind: Kind, payload,
             timestamp: int | None = None) -> Envelope:
        expected = _PAYLOAD_TYPES[kind]
        if not isinstance(payload, expected):
            raise BusError(
                f"{kind.value} payload must be {expected.__name__}, "
                f"got {type(payload).__name__}")
        if sender == recipient:
            raise BusError(f"agent {sender!r} cannot address itself")
        with self._cv:
            if self._closed:
                raise BusClosed("bus is shut down")
            if recipient not in self._mailboxes:
                raise UnknownAgent(recipient)
            envelope = Envelope(
                id=self._next_id, sender=sender, recipient=recipient,
                kind=kind, payload=payload,
                timestamp=int(self._clock()) if timestamp is None else timestamp)
            self._next_id += 1
            for name in self._order:
                if kind in self._subscriptions[name]:
                    self._mailboxes[name].append(envelope)
            self._cv.notify_all()
        return envelope

    def pending(self) -> int:
        with self._cv:
            return sum(len(box) for box in self._mailboxes.values())

    # single-scheduler (deterministic) execution ---------------------------

    def step(self) -> bool:
        """Deliver exactly one envelope; agents are drained in registration
        order so the schedule is reproducible."""
        with self._cv:
            item = None
            for name in self._order:
                if self._mailboxes[name]:
                    item = (self._handlers[name], self._mailboxes[name].popleft())
                    break
        if item is None:
            return False
        handler, envelope = item
        handler(envelope)
        return True

    def run_until_idle(self, max_steps: int = 10_000) -> int:
        steps = 0
        while steps < max_steps and self.step():
            steps += 1
        if steps >= max_steps:
            raise BusError(f"no quiescence after {max_steps} steps")
        return steps

    # threaded (live) execution --------------------------------------------

    def start_workers(self) -> None:
        for name in self._order:
            thread = threading.Thread(
                target=self._worker, args=(name,),
                name=f"agent-{name}", daemon=True)
            thread.start()
            self._threads.append(thread)

    def _worker(self, name: str) -> None:
        while True:
            with self._cv:
                while not self._mailboxes[name] and not self._closed:
                    self._cv.wait(0.5)
                if not self._mailboxes[name]:
                    if self._closed:
                        return
                    continue
                envelope = self._mailboxes[name].popleft()
            try:
                self._handlers[name](envelope)
            except Exception:
                logger.exception("agent %s failed on %s", name, envelope.kind)

    def close(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify_all()
        for thread in self._threads:
            thread.join(timeout=5)
