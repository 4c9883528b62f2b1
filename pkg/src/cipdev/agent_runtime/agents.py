"""The four device agents and the system object that wires them together.

Patient agent: identifies tags and owns card read/write. Biometric agent:
classifies samples, raises alarms, summarizes windows. Physician agent:
collects alarms/results for display and forwards results. SIMOPAC agent:
ships results as HL7 over MLLP and fetches supplementary records over HTTP.
"""

from __future__ import annotations

import contextlib
import logging
import threading
import time
from dataclasses import dataclass

import requests

from .. import hl7_gateway
from ..cip_codec import (
    CipCard, CipError, CipPatch, apply_update, decode_cip, encode_cip,
)
from ..hl7_gateway import RetryPolicy
from ..rfid_link.field import LinkError
from ..vitals import (
    Classification, MissingThreshold, Thresholds, VitalKind, VitalSample,
    evaluate, summarize,
)
from .bus import (
    Kind, MessageBus, PatientIdentifiedPayload, SupplementaryRequestPayload,
    SupplementaryResponsePayload, TestResultPayload,
)
from .state import DeviceState, NoCurrentPatient

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_SIZE = 10


class AgentError(Exception):
    pass


class StalePatient(AgentError):
    pass


class TagWriteFailed(AgentError):
    pass


@dataclass
class SimopacEndpoint:
    """Where the central system lives and how the device authenticates."""

    mllp_host: str = "127.0.0.1"
    mllp_port: int = hl7_gateway.DEFAULT_MLLP_PORT
    service_user: str = ""
    service_password: str = ""
    http_timeout: float = 3.0


class PatientAgent:
    name = "patient"

    def __init__(self, bus: MessageBus, state: DeviceState, reader, clock=time.time):
        self.bus = bus
        self.state = state
        self.reader = reader
        self._clock = clock
        self._lock = threading.Lock()

    def handle(self, envelope) -> None:
        pass  # the patient agent only reacts to the tag field

    def on_tag_present(self, uid: int):
        """Read and decode the card on a newly seen tag."""
        try:
            image = self.reader.read_full_card(uid)
            card = decode_cip(image)
        except (LinkError, CipError) as exc:
            self.state.record_identification_failure(type(exc).__name__)
            logger.warning("identification failed for uid %d: %s", uid, exc)
            return None
        self.state.set_current_patient(card, uid)
        return self.bus.send(self.name, "physician", Kind.PATIENT_IDENTIFIED,
                             PatientIdentifiedPayload(serial=card.serial, card=card))

    def update_card(self, patch: CipPatch, modifier: str,
                    now: int | None = None) -> CipCard:
        """Patch the current card, write it to the tag and confirm by
        re-reading; device state changes only after the confirmed write."""
        with self._lock:
            card, uid, _ = self.state.current_patient()
            if card is None:
                raise NoCurrentPatient("no identified patient")
            now = int(self._clock()) if now is None else now
            updated = apply_update(card, patch, modifier, now)
            image = encode_cip(updated)
            try:
                self.reader.write_full_card(uid, image)
                confirmed = decode_cip(self.reader.read_full_card(uid))
            except (LinkError, CipError) as exc:
                raise TagWriteFailed(f"{type(exc).__name__}: {exc}") from exc
            if confirmed != updated:
                raise TagWriteFailed("read-back does not match the written card")
            self.state.update_current_card(confirmed)
        self.bus.send(self.name, "physician", Kind.CARD_UPDATED, confirmed)
        return confirmed


class BiometricAgent:
    name = "biometric"

    def __init__(self, bus: MessageBus, state: DeviceState,
                 thresholds: Thresholds, window_size: int = DEFAULT_WINDOW_SIZE):
        self.bus = bus
        self.state = state
        self.thresholds = thresholds
        self.window_size = window_size
        self._window: list[VitalSample] = []
        self._window_epoch = -1
        self._lock = threading.Lock()

    def handle(self, envelope) -> None:
        pass  # samples arrive from the device listener, not the bus

    def on_sample(self, sample: VitalSample) -> list:
        """Classify one sample; abnormal readings alarm immediately, and a
        full patient window flushes one summary per kind present."""
        with self._lock:
            card, _, epoch = self.state.current_patient()
            if card is None:
                self.state.incr("samples_dropped")
                return []
            if epoch != self._window_epoch:
                # a newly identified patient clears any half-filled window
                self._window = []
                self._window_epoch = epoch
            self.state.record_sample(sample)
            self.state.incr("samples_ingested")
            sent = []
            try:
                classification = evaluate(sample, self.thresholds)
            except MissingThreshold:
                self.state.incr("samples_unclassified")
                classification = None
            if classification is not None and classification is not Classification.NORMAL:
                alarm = self.state.allocate_alarm(card.serial, sample, classification)
                sent.append(self.bus.send(self.name, "physician", Kind.ALARM, alarm))
            self._window.append(sample)
            if len(self._window) >= self.window_size:
                window, self._window = self._window, []
                for kind in VitalKind:
                    group = [s for s in window if s.kind is kind]
                    if group:
                        result = summarize(group, serial=card.serial)
                        sent.append(self.bus.send(
                            self.name, "physician", Kind.RESULTS_AVAILABLE, result))
            return sent


class PhysicianAgent:
    name = "physician"

    def __init__(self, bus: MessageBus, state: DeviceState,
                 on_supplementary_response=None):
        self.bus = bus
        self.state = state
        self._on_supplementary_response = on_supplementary_response

    def handle(self, envelope) -> None:
        if envelope.kind is Kind.ALARM:
            self.state.append_alarm(envelope.payload)
        elif envelope.kind is Kind.RESULTS_AVAILABLE:
            try:
                self.on_results(envelope.payload)
            except StalePatient as exc:
                self.state.incr("stale_results")
                self.state.record_event("stale-result", str(exc))
        elif envelope.kind is Kind.SUPPLEMENTARY_RESPONSE:
            payload: SupplementaryResponsePayload = envelope.payload
            self.state.record_supplementary(payload.serial, _response_json(payload))
            if self._on_supplementary_response:
                self._on_supplementary_response(payload)
        elif envelope.kind in (Kind.PATIENT_IDENTIFIED, Kind.CARD_UPDATED):
            self.state.incr(f"seen_{envelope.kind.value}")

    def on_results(self, result) -> None:
        """Store a summary for display; forward it when it belongs to the
        current patient, otherwise keep it and flag staleness."""
        self.state.store_result(result)
        card, _, _ = self.state.current_patient()
        if card is None or card.serial != result.serial:
            raise StalePatient(
                f"result for {result.serial}, current "
                f"{card.serial if card else 'none'}")
        self.bus.send(self.name, "simopac", Kind.TEST_RESULT,
                      TestResultPayload(card=card, result=result))

    def acknowledge_alarm(self, alarm_id: int, identity: str):
        return self.state.ack_alarm(alarm_id, identity)


def _response_json(payload: SupplementaryResponsePayload) -> dict:
    return {"serial": payload.serial, "ok": payload.ok,
            "record": payload.record, "cause": payload.cause}


class SimopacAgent:
    name = "simopac"

    def __init__(self, bus: MessageBus, state: DeviceState,
                 endpoint: SimopacEndpoint,
                 retry_policy: RetryPolicy | None = None, clock=time.time):
        self.bus = bus
        self.state = state
        self.endpoint = endpoint
        self.retry_policy = retry_policy or RetryPolicy()
        self._clock = clock
        self._token: str | None = None

    def handle(self, envelope) -> None:
        if envelope.kind is Kind.TEST_RESULT:
            self.on_test_result(envelope.payload)
        elif envelope.kind is Kind.SUPPLEMENTARY_REQUEST:
            self.on_supplementary_request(envelope.payload)

    def on_test_result(self, payload: TestResultPayload) -> bool:
        """Build and deliver one ORU; a positive ACK counts as delivered."""
        message = hl7_gateway.build_oru(
            payload.card, payload.result, hl7_gateway.next_control_id(),
            int(self._clock()))
        try:
            ack = hl7_gateway.send_and_await_ack(
                self.endpoint.mllp_host, self.endpoint.mllp_port, message,
                self.retry_policy)
        except hl7_gateway.Timeout as exc:
            self.state.incr("hl7_failures")
            self.state.incr("hl7_retries", by=exc.attempts - 1)
            self.state.record_event("hl7-delivery-failed", str(exc))
            return False
        except hl7_gateway.Hl7Error as exc:
            self.state.incr("hl7_failures")
            self.state.record_event("hl7-delivery-failed", str(exc))
            return False
        if ack.accepted:
            self.state.incr("hl7_delivered")
            return True
        self.state.incr("hl7_ack_negative")
        self.state.record_event("hl7-ack-negative", ack.code)
        return False

    def on_supplementary_request(self, payload: SupplementaryRequestPayload) -> None:
        ok, record, cause = self._query(payload)
        self.bus.send(self.name, "physician", Kind.SUPPLEMENTARY_RESPONSE,
                      SupplementaryResponsePayload(
                          request_id=payload.request_id, serial=payload.serial,
                          ok=ok, record=record, cause=cause))

    def _query(self, payload: SupplementaryRequestPayload):
        base = payload.server_uri.rstrip("/")
        try:
            token = self._ensure_token(base)
            if token is None:
                return False, None, "Unauthorized"
            response = requests.get(
                f"{base}/patients/{payload.serial}",
                params={"lang": payload.language},
                headers={"Authorization": f"Bearer {token}"},
                timeout=self.endpoint.http_timeout)
            if response.status_code == 401:
                # session may have expired server-side; one fresh login
                self._token = None
                token = self._ensure_token(base)
                if token is None:
                    return False, None, "Unauthorized"
                response = requests.get(
                    f"{base}/patients/{payload.serial}",
                    params={"lang": payload.language},
                    headers={"Authorization": f"Bearer {token}"},
                    timeout=self.endpoint.http_timeout)
        except requests.RequestException as exc:
            self.state.incr("supplementary_failures")
            logger.warning("supplementary query failed: %s", exc)
            return False, None, "ServerUnreachable"
        if response.status_code == 200:
            return True, response.json(), None
        self.state.incr("supplementary_failures")
        if response.status_code == 401:
            return False, None, "Unauthorized"
        if response.status_code == 404:
            return False, None, "UnknownPatient"
        return False, None, f"Http{response.status_code}"

    def _ensure_token(self, base: str) -> str | None:
        if self._token:
            return self._token
        if not self.endpoint.service_user:
            return None
        response = requests.post(
            f"{base}/login",
            json={"user": self.endpoint.service_user,
                  "password": self.endpoint.service_password},
            timeout=self.endpoint.http_timeout)
        if response.status_code != 200:
            return None
        self._token = response.json()["token"]
        return self._token


class AgentSystem:
    """Bus + agents wired per the device task lists, in one of two modes.

    deterministic=True: no agent threads; every external stimulus runs the
    scheduler to quiescence under one lock before returning.
    """

    def __init__(self, reader, state: DeviceState, thresholds: Thresholds,
                 endpoint: SimopacEndpoint,
                 window_size: int = DEFAULT_WINDOW_SIZE,
                 retry_policy: RetryPolicy | None = None,
                 deterministic: bool = False, clock=time.time):
        self.state = state
        self.deterministic = deterministic
        self.bus = MessageBus(clock=clock)
        self._sched_lock = threading.RLock()
        self._supp_lock = threading.Lock()
        self._supp_waiters: dict[int, dict] = {}
        self._supp_next_id = 1

        self.patient = PatientAgent(self.bus, state, reader, clock=clock)
        self.biometric = BiometricAgent(self.bus, state, thresholds,
                                        window_size=window_size)
        self.physician = PhysicianAgent(self.bus, state,
                                        on_supplementary_response=self._resolve)
        self.simopac = SimopacAgent(self.bus, state, endpoint,
                                    retry_policy=retry_policy, clock=clock)

        for agent in (self.patient, self.biometric, self.physician, self.simopac):
            self.bus.register(agent.name, agent.handle)
        self.bus.subscribe("physician", (
            Kind.PATIENT_IDENTIFIED, Kind.ALARM, Kind.RESULTS_AVAILABLE,
            Kind.SUPPLEMENTARY_RESPONSE, Kind.CARD_UPDATED))
        self.bus.subscribe("simopac", (Kind.TEST_RESULT,
                                       Kind.SUPPLEMENTARY_REQUEST))

    def start(self) -> None:
        if not self.deterministic:
            self.bus.start_workers()

    def stop(self) -> None:
        self.bus.close()

    @contextlib.contextmanager
    def drive(self):
        """Run the enclosed stimulus; in deterministic mode the bus is then
        drained to quiescence before anyone else gets in."""
        if self.deterministic:
            with self._sched_lock:
                yield
                self.bus.run_until_idle()
        else:
            yield

    # external stimuli -------------------------------------------------------

    def on_tag_seen(self, uid: int):
        with self.drive():
            return self.patient.on_tag_present(uid)

    def on_sample(self, sample: VitalSample):
        with self.drive():
            return self.biometric.on_sample(sample)

    def update_card(self, patch: CipPatch, modifier: str) -> CipCard:
        with self.drive():
            return self.patient.update_card(patch, modifier)

    def acknowledge_alarm(self, alarm_id: int, identity: str):
        return self.physician.acknowledge_alarm(alarm_id, identity)

    def request_supplementary(self, timeout: float = 5.0) -> dict:
        """Ask the SIMOPAC agent for the current patient's server record and
        wait for the cached response."""
        card, _, _ = self.state.current_patient()
        if card is None:
            raise NoCurrentPatient("no identified patient")
        with self._supp_lock:
            request_id = self._supp_next_id
            self._supp_next_id += 1
            waiter = {"event": threading.Event(), "payload": None}
            self._supp_waiters[request_id] = waiter
        try:
            with self.drive():
                self.bus.send("physician", "simopac", Kind.SUPPLEMENTARY_REQUEST,
                              SupplementaryRequestPayload(
                                  request_id=request_id, serial=card.serial,
                                  language=card.language,
                                  server_uri=card.server_uri))
            if not waiter["event"].wait(timeout):
                return {"serial": card.serial, "ok": False, "record": None,
                        "cause": "Timeout"}
            return _response_json(waiter["payload"])
        finally:
            with self._supp_lock:
                self._supp_waiters.pop(request_id, None)

    def _resolve(self, payload: SupplementaryResponsePayload) -> None:
        with self._supp_lock:
            waiter = self._supp_waiters.get(payload.request_id)
        if waiter is not None:
            waiter["payload"] = payload
            waiter["event"].set()
