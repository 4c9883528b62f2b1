"""Event-sourced EHR store: every mutation is one JSON line on disk.

The log carries only mutations (observations and audit entries); the
demo-patient roster is seeded from configuration, so replaying the log over
the same seeds reproduces the in-memory state exactly.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

LOG_FILENAME = "simopac.log"


class StoreError(Exception):
    pass


class CorruptLogLine(StoreError):
    def __init__(self, line_number: int, detail: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {detail}")


@dataclass
class Observation:
    kind: str
    min: float
    max: float
    mean: float
    window_start: int
    window_end: int
    received_at: int
    source: str

    def to_json(self) -> dict:
        return {"kind": self.kind, "min": self.min, "max": self.max,
                "mean": self.mean, "window_start": self.window_start,
                "window_end": self.window_end,
                "received_at": self.received_at, "source": self.source}

    @classmethod
    def from_json(cls, obj: dict) -> "Observation":
        return cls(**obj)


@dataclass
class EhrRecord:
    serial: int
    display_name: str = "UNREGISTERED"
    birth_year: int = 0
    observations: list[Observation] = field(default_factory=list)


@dataclass
class AuditEntry:
    requester: str
    address: str
    serial: int
    timestamp: int
    outcome: str  # granted | denied | unknown_patient

    def to_json(self) -> dict:
        return {"requester": self.requester, "address": self.address,
                "serial": self.serial, "timestamp": self.timestamp,
                "outcome": self.outcome}


class EhrStore:
    """Guarded in-memory records plus the append-only mutation log."""

    def __init__(self, data_dir: str | Path, patients: list[dict] | None = None,
                 clock=time.time):
        self._dir = Path(data_dir)
        self._log_path = self._dir / LOG_FILENAME
        self._clock = clock
        self._lock = threading.Lock()
        self._records: dict[int, EhrRecord] = {}
        self._audit: list[AuditEntry] = []
        self._fh = None
        for entry in patients or []:
            self._records[int(entry["serial"])] = EhrRecord(
                serial=int(entry["serial"]),
                display_name=entry.get("display_name", "UNREGISTERED"),
                birth_year=int(entry.get("birth_year", 0)))

    @property
    def log_path(self) -> Path:
        return self._log_path

    def load(self) -> None:
        """Replay the log, then open it for appending."""
        self._dir.mkdir(parents=True, exist_ok=True)
        if self._log_path.exists():
            with self._log_path.open("r", encoding="utf-8") as fh:
                for line_number, line in enumerate(fh, start=1):
                    self._replay(line_number, line)
        self._fh = self._log_path.open("a", encoding="utf-8")

    def _replay(self, line_number: int, line: str) -> None:
        line = line.strip()
        if not line:
            raise CorruptLogLine(line_number, "blank line")
        try:
            entry = json.loads(line)
            kind = entry["type"]
            if kind == "observation":
                record = self._record_for(int(entry["serial"]))
                record.observations.append(Observation.from_json(entry["data"]))
            elif kind == "audit":
                self._audit.append(AuditEntry(**entry["data"]))
            else:
                raise ValueError(f"unknown record type {kind!r}")
        except CorruptLogLine:
            raise
        except Exception as exc:
            raise CorruptLogLine(line_number, str(exc))

    def close(self) -> None:
        with self._lock:
            if self._fh:
                self._fh.close()
                self._fh = None

    def _append_log(self, entry: dict) -> None:
        if self._fh is None:
            raise StoreError("store not loaded")
        self._fh.write(json.dumps(entry) + "\n")
        self._fh.flush()

    def _record_for(self, serial: int) -> EhrRecord:
        record = self._records.get(serial)
        if record is None:
            record = EhrRecord(serial=serial)
            self._records[serial] = record
        return record

    # mutations ---------------------------------------------------------------

    def add_observation(self, serial: int, observation: Observation) -> None:
        with self._lock:
            self._record_for(serial).observations.append(observation)
            self._append_log({"type": "observation", "serial": serial,
                              "ts": int(self._clock()),
                              "data": observation.to_json()})

    def record_audit(self, requester: str, address: str, serial: int,
                     outcome: str) -> AuditEntry:
        entry = AuditEntry(requester=requester, address=address, serial=serial,
                           timestamp=int(self._clock()), outcome=outcome)
        with self._lock:
            self._audit.append(entry)
            self._append_log({"type": "audit", "ts": entry.timestamp,
                              "data": entry.to_json()})
        return entry

    # queries -------------------------------------------------------------------

    def get_record(self, serial: int) -> EhrRecord | None:
        with self._lock:
            record = self._records.get(serial)
            if record is None:
                return None
            return EhrRecord(serial=record.serial,
                             display_name=record.display_name,
                             birth_year=record.birth_year,
                             observations=list(record.observations))

    def observation_count(self, serial: int | None = None) -> int:
        with self._lock:
            if serial is not None:
                record = self._records.get(serial)
                return len(record.observations) if record else 0
            return sum(len(r.observations) for r in self._records.values())

    def audit_count(self) -> int:
        with self._lock:
            return len(self._audit)

    def audit_entries(self) -> list[AuditEntry]:
        with self._lock:
            return list(self._audit)


def scan_log_counts(log_path: str | Path) -> dict:
    """Independent count of persisted mutations, straight off the log file."""
    observations = 0
    audits = 0
    path = Path(log_path)
    if path.exists():
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                if entry.get("type") == "observation":
                    observations += 1
                elif entry.get("type") == "audit":
                    audits += 1
    return {"observations": observations, "audits": audits}
