"""Guarded device state: current patient, alarms, results, diagnostics.

All mutation happens under one lock; readers get JSON-ready snapshots.
State changes fan out to server-sent-event subscribers as (event, json)
pairs so the web API can stream them without holding any lock.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass, replace

from ..cip_codec import CipCard, card_to_json
from ..vitals import (
    BiometricResult, Classification, VitalSample, result_to_json,
    sample_to_json,
)


class StateError(Exception):
    pass


class UnknownAlarmId(StateError):
    pass


class AlreadyAcknowledged(StateError):
    pass


class NoCurrentPatient(StateError):
    pass


@dataclass(frozen=True)
class AlarmEvent:
    alarm_id: int
    serial: int
    sample: VitalSample
    classification: Classification
    acknowledged: bool = False
    acknowledged_by: str | None = None

    def __post_init__(self):
        if self.classification is Classification.NORMAL:
            raise StateError("an alarm cannot carry a Normal classification")
        if self.acknowledged != (self.acknowledged_by is not None):
            raise StateError("acknowledged_by must be present iff acknowledged")


def alarm_to_json(alarm: AlarmEvent) -> dict:
    return {
        "alarm_id": alarm.alarm_id,
        "serial": alarm.serial,
        "sample": sample_to_json(alarm.sample),
        "classification": alarm.classification.value,
        "acknowledged": alarm.acknowledged,
        "acknowledged_by": alarm.acknowledged_by,
    }


RECENT_SAMPLES = 512
DEVICE_EVENT_LOG = 100


class DeviceState:
    def __init__(self, clock=time.time):
        self._lock = threading.RLock()
        self._clock = clock
        self._card: CipCard | None = None
        self._uid: int | None = None
        self._epoch = 0
        self._alarms: list[AlarmEvent] = []
        self._next_alarm_id = 1
        self._results: dict[tuple[int, str], BiometricResult] = {}
        self._recent: dict[str, deque] = defaultdict(
            lambda: deque(maxlen=RECENT_SAMPLES))
        self._supplementary: dict[int, dict] = {}
        self._counters: dict[str, int] = defaultdict(int)
        self._events: deque = deque(maxlen=DEVICE_EVENT_LOG)
        self._subscribers: list[queue.SimpleQueue] = []

    # patient --------------------------------------------------------------

    def set_current_patient(self, card: CipCard, uid: int) -> int:
        with self._lock:
            self._card = card
            self._uid = uid
            self._epoch += 1
            epoch = self._epoch
        self._publish("patient", card_to_json(card))
        return epoch

    def update_current_card(self, card: CipCard) -> None:
        with self._lock:
            if self._card is None:
                raise NoCurrentPatient("no card to update")
            self._card = card
        self._publish("card", card_to_json(card))

    def current_patient(self) -> tuple[CipCard | None, int | None, int]:
        with self._lock:
            return self._card, self._uid, self._epoch

    # alarms ---------------------------------------------------------------

    def allocate_alarm(self, serial: int, sample: VitalSample,
                       classification: Classification) -> AlarmEvent:
        with self._lock:
            alarm = AlarmEvent(alarm_id=self._next_alarm_id, serial=serial,
                               sample=sample, classification=classification)
            self._next_alarm_id += 1
        return alarm

    def append_alarm(self, alarm: AlarmEvent) -> None:
        with self._lock:
            self._alarms.append(alarm)
        self._publish("alarm", alarm_to_json(alarm))

    def ack_alarm(self, alarm_id: int, identity: str) -> AlarmEvent:
        with self._lock:
            for index, alarm in enumerate(self._alarms):
                if alarm.alarm_id == alarm_id:
                    if alarm.acknowledged:
                        raise AlreadyAcknowledged(f"alarm {alarm_id}")
                    updated = replace(alarm, acknowledged=True,
                                      acknowledged_by=identity)
                    self._alarms[index] = updated
                    return updated
            raise UnknownAlarmId(f"alarm {alarm_id}")

    def alarms(self) -> list[AlarmEvent]:
        with self._lock:
            return list(self._alarms)

    # vitals / results -----------------------------------------------------

    def record_sample(self, sample: VitalSample) -> None:
        with self._lock:
            self._recent[sample.kind.value].append(sample)

    def recent_samples(self, kind: str | None, limit: int) -> list[VitalSample]:
        with self._lock:
            if kind is not None:
                samples = list(self._recent.get(kind, ()))
            else:
                samples = sorted(
                    (s for box in self._recent.values() for s in box),
                    key=lambda s: s.timestamp)
            return samples[-limit:]

    def store_result(self, result: BiometricResult) -> None:
        with self._lock:
            self._results[(result.serial, result.kind.value)] = result
        self._publish("result", result_to_json(result))

    def latest_results(self, serial: int | None = None) -> list[BiometricResult]:
        with self._lock:
            return [r for (s, _), r in sorted(self._results.items())
                    if serial is None or s == serial]

    # supplementary cache ----------------------------------------------------

    def record_supplementary(self, serial: int, payload: dict) -> None:
        with self._lock:
            self._supplementary[serial] = payload

    def supplementary_for(self, serial: int) -> dict | None:
        with self._lock:
            return self._supplementary.get(serial)

    # diagnostics ------------------------------------------------------------

    def incr(self, counter: str, by: int = 1) -> None:
        with self._lock:
            self._counters[counter] += by

    def counter(self, name: str) -> int:
        with self._lock:
            return self._counters.get(name, 0)

    def record_event(self, event_type: str, detail: str) -> None:
        with self._lock:
            self._events.append({"timestamp": int(self._clock()),
                                 "type": event_type, "detail": detail})

    def record_identification_failure(self, cause: str) -> None:
        self.incr("identification_failures")
        self.record_event("identification-failed", cause)

    def diag(self) -> dict:
        with self._lock:
            return {"counters": dict(self._counters),
                    "events": list(self._events)}

    # server-sent events -----------------------------------------------------

    def subscribe_events(self) -> queue.SimpleQueue:
        subscription: queue.SimpleQueue = queue.SimpleQueue()
        with self._lock:
            self._subscribers.append(subscription)
        return subscription

    def unsubscribe_events(self, subscription) -> None:
        with self._lock:
            if subscription in self._subscribers:
                self._subscribers.remove(subscription)

    def close_event_streams(self) -> None:
        with self._lock:
            subscribers = list(self._subscribers)
        for subscription in subscribers:
            subscription.put(None)

    def _publish(self, event: str, payload: dict) -> None:
        with self._lock:
            subscribers = list(self._subscribers)
        data = json.dumps(payload)
        for subscription in subscribers:
            subscription.put((event, data))
