"""Medical-device sample ingestion, validation and abnormality classification.

Wire format, one sample per line over TCP:

    VITAL <device_id> <kind> <value> <unit> <timestamp>\n

The unit token is informational; the kind is authoritative.
"""

from __future__ import annotations

import enum
import logging
import math
import socketserver
import threading
from dataclasses import dataclass

logger = logging.getLogger(__name__)

DEFAULT_PORT = 4502


class VitalsError(Exception):
    pass


class ParseError(VitalsError):
    def __init__(self, position: int, detail: str):
        self.position = position
        super().__init__(f"token {position}: {detail}")


class UnknownVitalType(VitalsError):
    pass


class NonFiniteValue(VitalsError):
    pass


class MissingThreshold(VitalsError):
    def __init__(self, kind: "VitalKind"):
        self.kind = kind
        super().__init__(f"no threshold configured for {kind.value}")


class EmptyWindow(VitalsError):
    pass


class MixedKinds(VitalsError):
    pass


class VitalKind(enum.Enum):
    HR = "HR"
    TEMP = "TEMP"
    SYS = "SYS"
    DIA = "DIA"


UNITS = {VitalKind.HR: "bpm", VitalKind.TEMP: "C",
         VitalKind.SYS: "mmHg", VitalKind.DIA: "mmHg"}

# Stand-in alert bands; clinical deployment would configure these.
DEFAULT_THRESHOLDS = {
    VitalKind.HR: (40.0, 150.0),
    VitalKind.TEMP: (35.0, 38.0),
    VitalKind.SYS: (90.0, 180.0),
    VitalKind.DIA: (50.0, 110.0),
}


class Classification(enum.Enum):
    NORMAL = "Normal"
    ABNORMAL_LOW = "AbnormalLow"
    ABNORMAL_HIGH = "AbnormalHigh"


@dataclass(frozen=True)
class VitalSample:
    device_id: str
    kind: VitalKind
    value: float
    timestamp: int


@dataclass(frozen=True)
class BiometricResult:
    serial: int
    kind: VitalKind
    window_start: int
    window_end: int
    count: int
    min: float
    max: float
    mean: float


class Thresholds:
    """Per-kind (low, high) alert bands; low < high for every kind."""

    def __init__(self, bands: dict[VitalKind, tuple[float, float]] | None = None):
        self.bands = dict(DEFAULT_THRESHOLDS if bands is None else bands)
        for kind, (low, high) in self.bands.items():
            if not low < high:
                raise VitalsError(f"{kind.value}: low {low} must be < high {high}")

    @classmethod
    def from_json(cls, obj: dict) -> "Thresholds":
        bands = dict(DEFAULT_THRESHOLDS)
        for name, band in obj.items():
            try:
                kind = VitalKind(name)
            except ValueError:
                raise VitalsError(f"unknown vital kind {name!r}")
            bands[kind] = (float(band["low"]), float(band["high"]))
        return cls(bands)


def parse_vital_line(line: str) -> VitalSample:
    tokens = line.strip().split()
    if len(tokens) != 6:
        raise ParseError(len(tokens), f"expected 6 tokens, got {len(tokens)}")
    if tokens[0] != "VITAL":
        raise ParseError(0, f"expected VITAL, got {tokens[0]!r}")
    device_id = tokens[1]
    try:
        kind = VitalKind(tokens[2])
    except ValueError:
        raise UnknownVitalType(tokens[2])
    try:
        value = float(tokens[3])
    except ValueError:
        raise ParseError(3, f"bad value {tokens[3]!r}")
    if not math.isfinite(value):
        raise NonFiniteValue(tokens[3])
    # tokens[4] is the unit, informational only
    try:
        timestamp = int(tokens[5])
    except ValueError:
        raise ParseError(5, f"bad timestamp {tokens[5]!r}")
    if timestamp < 0:
        raise ParseError(5, "timestamp must be >= 0")
    return VitalSample(device_id=device_id, kind=kind, value=value,
                       timestamp=timestamp)


def format_vital_line(sample: VitalSample) -> str:
    value = format(sample.value, "g")
    return (f"VITAL {sample.device_id} {sample.kind.value} {value} "
            f"{UNITS[sample.kind]} {sample.timestamp}")


def evaluate(sample: VitalSample, thresholds: Thresholds) -> Classification:
    """Closed-interval classification: both bounds count as Normal."""
    band = thresholds.bands.get(sample.kind)
    if band is None:
        raise MissingThreshold(sample.kind)
    low, high = band
    if sample.value < low:
        return Classification.ABNORMAL_LOW
    if sample.value > high:
        return Classification.ABNORMAL_HIGH
    return Classification.NORMAL


def summarize(samples: list[VitalSample], serial: int = 0) -> BiometricResult:
    """Stats over one patient's same-kind samples; order never matters."""
    if not samples:
        raise EmptyWindow("no samples")
    kind = samples[0].kind
    if any(s.kind is not kind for s in samples):
        raise MixedKinds(f"window mixes {sorted({s.kind.value for s in samples})}")
    values = [s.value for s in samples]
    times = [s.timestamp for s in samples]
    return BiometricResult(
        serial=serial,
        kind=kind,
        window_start=min(times),
        window_end=max(times),
        count=len(samples),
        min=min(values),
        max=max(values),
        # fsum is exactly rounded, so sample order cannot change the mean
        mean=math.fsum(values) / len(values),
    )


def sample_to_json(sample: VitalSample) -> dict:
    return {"device_id": sample.device_id, "kind": sample.kind.value,
            "value": sample.value, "timestamp": sample.timestamp}


def result_to_json(result: BiometricResult) -> dict:
    return {"serial": result.serial, "kind": result.kind.value,
            "window_start": result.window_start, "window_end": result.window_end,
            "count": result.count, "min": result.min, "max": result.max,
            "mean": result.mean}


class VitalsListener:
    """Line-protocol TCP ingester; parsed samples go to a callback."""

    def __init__(self, on_sample, host: str = "127.0.0.1",
                 port: int = DEFAULT_PORT, on_bad_line=None):
        self.on_sample = on_sample
        self.on_bad_line = on_bad_line

        listener = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                for raw in self.rfile:
                    line = raw.decode("utf-8", errors="replace").strip()
                    if not line:
                        continue
                    try:
                        sample = parse_vital_line(line)
                    except VitalsError as exc:
                        logger.debug("bad vital line %r: %s", line, exc)
                        if listener.on_bad_line:
                            listener.on_bad_line(line, exc)
                        continue
                    listener.on_sample(sample)

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="vitals", daemon=True)
        self._thread.start()
        logger.info("vitals listener on port %d", self.port)

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)
