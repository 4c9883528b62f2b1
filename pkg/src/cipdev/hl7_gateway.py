"""HL7 v2-style message construction, MLLP framing and delivery.

Only the subset needed to ship observation results is implemented: MSH,
PID, OBR, OBX and MSA segments, pipe-delimited with `^~\\&` encoding
characters and carriage-return segment terminators, wrapped in MLLP
(0x0B ... 0x1C 0x0D) over TCP.

There is no escaping scheme: free text placed into fields must not contain
any of the delimiter characters. Builder-constructed identifiers such as
ORU^R01 or HR^min legitimately use the component separator; the encoder
itself rejects only the characters that would corrupt segment structure.
"""

from __future__ import annotations

import calendar
import itertools
import socket
import threading
import time
from dataclasses import dataclass

from .cip_codec import CipCard
from .vitals import UNITS, BiometricResult

DEFAULT_MLLP_PORT = 4503

VT = 0x0B   # MLLP start block
FS = 0x1C   # MLLP end block
CR = 0x0D

SENDING_APP = "CIPDEV"
RECEIVING_APP = "SIMOPAC"
HL7_VERSION = "2.5"

_FREE_TEXT_FORBIDDEN = set("|^~\\&\r")


class Hl7Error(Exception):
    pass


class MissingMsh(Hl7Error):
    pass


class EmptySegment(Hl7Error):
    pass


class BadFraming(Hl7Error):
    pass


class Incomplete(Hl7Error):
    pass


class SerialMismatch(Hl7Error):
    pass


class ControlIdMismatch(Hl7Error):
    pass


class IllegalFieldText(Hl7Error):
    pass


class Timeout(Hl7Error):
    def __init__(self, attempts: int, last_error: str = ""):
        self.attempts = attempts
        msg = f"no acknowledgment after {attempts} attempts"
        if last_error:
            msg += f" (last error: {last_error})"
        super().__init__(msg)


@dataclass(frozen=True)
class Hl7Message:
    message_type: str
    control_id: str
    segments: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class AckStatus:
    code: str          # AA, AE or AR
    control_id: str

    @property
    def accepted(self) -> bool:
        return self.code == "AA"


@dataclass
class RetryPolicy:
    attempts: int = 3
    backoff: tuple[float, ...] = (0.2, 0.4, 0.8)
    timeout: float = 2.0


_control_counter = itertools.count(1)
_control_lock = threading.Lock()


def next_control_id() -> str:
    """Process-unique, strictly increasing message control id."""
    with _control_lock:
        return str(next(_control_counter))


def hl7_timestamp(unix_seconds: int) -> str:
    return time.strftime("%Y%m%d%H%M%S", time.gmtime(unix_seconds))


def parse_hl7_timestamp(text: str) -> int:
    return calendar.timegm(time.strptime(text, "%Y%m%d%H%M%S"))


def check_free_text(value: str) -> str:
    """Reject free text that would collide with HL7 delimiters."""
    bad = _FREE_TEXT_FORBIDDEN & set(value)
    if bad:
        raise IllegalFieldText(f"{value!r} contains {sorted(bad)}")
    return value


def format_number(value: float) -> str:
    """Numeric OBX value with at most two decimal places."""
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return text or "0"


def _msh(message_type: str, control_id: str, now: int) -> tuple[str, ...]:
    return ("MSH", "^~\\&", SENDING_APP, "DEVICE", RECEIVING_APP, "CENTRAL",
            hl7_timestamp(now), "", message_type, control_id, "P", HL7_VERSION)


def build_oru(card: CipCard, result: BiometricResult, control_id: str,
              now: int) -> Hl7Message:
    """ORU^R01 carrying one windowed result as min/max/mean OBX rows."""
    if result.serial != card.serial:
        raise SerialMismatch(f"result {result.serial} vs card {card.serial}")
    unit = UNITS[result.kind]
    segments = [
        _msh("ORU^R01", control_id, now),
        ("PID", "1", "", str(card.serial)),
        ("OBR", "1", "", "", "VITALS^Vital sign summary", "", "",
         hl7_timestamp(result.window_start), hl7_timestamp(result.window_end)),
    ]
    for index, (stat, value) in enumerate(
            (("min", result.min), ("max", result.max), ("mean", result.mean)),
            start=1):
        segments.append(("OBX", str(index), "NM",
                         f"{result.kind.value}^{stat}", "",
                         format_number(value), unit, "", "", "", "", "F"))
    return Hl7Message(message_type="ORU^R01", control_id=control_id,
                      segments=tuple(segments))


def build_ack(control_id: str, code: str, now: int | None = None) -> Hl7Message:
    now = int(time.time()) if now is None else now
    ack_control = next_control_id()
    segments = (
        ("MSH", "^~\\&", RECEIVING_APP, "CENTRAL", SENDING_APP, "DEVICE",
         hl7_timestamp(now), "", "ACK", ack_control, "P", HL7_VERSION),
        ("MSA", code, control_id),
    )
    return Hl7Message(message_type="ACK", control_id=ack_control,
                      segments=segments)


def encode_hl7(msg: Hl7Message) -> str:
    if not msg.segments or msg.segments[0][0] != "MSH":
        raise MissingMsh("first segment must be MSH")
    lines = []
    for segment in msg.segments:
        if not segment or not segment[0]:
            raise EmptySegment(repr(segment))
        for fld in segment:
            if "|" in fld or "\r" in fld:
                raise IllegalFieldText(f"field {fld!r} breaks segment structure")
        lines.append("|".join(segment))
    return "\r".join(lines) + "\r"


def parse_hl7(text: str) -> Hl7Message:
    if not text.startswith("MSH|"):
        raise MissingMsh(text[:16] + "..." if len(text) > 16 else text)
    chunks = text.rstrip("\r").split("\r")
    segments = []
    for chunk in chunks:
        if not chunk:
            raise EmptySegment("blank segment line")
        segments.append(tuple(chunk.split("|")))
    msh = segments[0]
    message_type = msh[8] if len(msh) > 8 else ""
    control_id = msh[9] if len(msh) > 9 else ""
    return Hl7Message(message_type=message_type, control_id=control_id,
                      segments=tuple(segments))


def mllp_wrap(text: str) -> bytes:
    return bytes([VT]) + text.encode("utf-8") + bytes([FS, CR])


def mllp_unwrap(data: bytes) -> str:
    if not data or data[0] != VT:
        raise BadFraming("missing start block")
    if len(data) < 3 or data[-2] != FS or data[-1] != CR:
        raise Incomplete("missing end block / carriage return")
    return data[1:-2].decode("utf-8")


class MllpStream:
    """Splits a TCP byte stream into MLLP-framed messages."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> None:
        self._buf += data

    def next_message(self) -> str | None:
        if not self._buf:
            return None
        if self._buf[0] != VT:
            raise BadFraming(f"stream byte 0x{self._buf[0]:02X} outside frame")
        end = self._buf.find(bytes([FS, CR]))
        if end < 0:
            return None
        text = self._buf[1:end].decode("utf-8")
        del self._buf[:end + 2]
        return text


def find_segment(msg: Hl7Message, name: str) -> tuple[str, ...] | None:
    for segment in msg.segments:
        if segment[0] == name:
            return segment
    return None


def parse_ack(text: str) -> AckStatus:
    msg = parse_hl7(text)
    msa = find_segment(msg, "MSA")
    if msa is None or len(msa) < 3:
        raise Hl7Error("acknowledgment lacks a usable MSA segment")
    code = msa[1]
    if code not in ("AA", "AE", "AR"):
        raise Hl7Error(f"unknown acknowledgment code {code!r}")
    return AckStatus(code=code, control_id=msa[2])


def send_and_await_ack(host: str, port: int, msg: Hl7Message,
                       policy: RetryPolicy | None = None) -> AckStatus:
    """Deliver over MLLP and return the matching MSA status.

    Connection failures and read timeouts are retried per the policy;
    a negative acknowledgment is a result, not an error.
    """
    policy = policy or RetryPolicy()
    payload = mllp_wrap(encode_hl7(msg))
    last_error = ""
    for attempt in range(policy.attempts):
        try:
            with socket.create_connection((host, port), timeout=policy.timeout) as sock:
                sock.settimeout(policy.timeout)
                sock.sendall(payload)
                stream = MllpStream()
                while True:
                    data = sock.recv(4096)
                    if not data:
                        raise OSError("connection closed before acknowledgment")
                    stream.feed(data)
                    text = stream.next_message()
                    if text is not None:
                        break
            ack = parse_ack(text)
            if ack.control_id != msg.control_id:
                raise ControlIdMismatch(
                    f"sent {msg.control_id}, acknowledged {ack.control_id}")
            return ack
        except (OSError, socket.timeout) as exc:
            last_error = str(exc)
            if attempt + 1 < policy.attempts:
                delay = policy.backoff[min(attempt, len(policy.backoff) - 1)]
                time.sleep(delay)
    raise Timeout(policy.attempts, last_error)
