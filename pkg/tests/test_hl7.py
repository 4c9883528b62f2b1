"""HL7 construction/parsing, MLLP framing, delivery and acknowledgment."""

import random
import socketserver
import threading
import time

import pytest

from cipdev.cip_codec import CipCard
from cipdev.hl7_gateway import (
    AckStatus, ControlIdMismatch, Hl7Message, IllegalFieldText, Incomplete,
    BadFraming, MissingMsh, MllpStream, RetryPolicy, SerialMismatch, Timeout,
    build_ack, build_oru, check_free_text, encode_hl7, find_segment,
    format_number, hl7_timestamp, mllp_unwrap, mllp_wrap, next_control_id,
    parse_ack, parse_hl7, parse_hl7_timestamp, send_and_await_ack,
)
from cipdev.vitals import BiometricResult, VitalKind

CARD = CipCard(serial=42)
RESULT = BiometricResult(serial=42, kind=VitalKind.HR, window_start=1700000000,
                         window_end=1700000009, count=10, min=70.0, max=74.0,
                         mean=72.0)


def test_build_oru_shape():
    msg = build_oru(CARD, RESULT, "77", now=1700000100)
    text = encode_hl7(msg)
    assert text.startswith("MSH|^~\\&|CIPDEV|")
    pid = find_segment(msg, "PID")
    assert pid[3] == "42"
    obx = [seg for seg in msg.segments if seg[0] == "OBX"]
    assert len(obx) == 3
    assert [seg[3] for seg in obx] == ["HR^min", "HR^max", "HR^mean"]
    assert [seg[5] for seg in obx] == ["70", "74", "72"]
    assert all(seg[6] == "bpm" for seg in obx)
    assert msg.segments[0][11] == "2.5"


def test_build_oru_serial_mismatch():
    with pytest.raises(SerialMismatch):
        build_oru(CipCard(serial=1), RESULT, "1", now=0)


def test_encode_parse_roundtrip_oru():
    msg = build_oru(CARD, RESULT, "12", now=1700000100)
    assert parse_hl7(encode_hl7(msg)) == msg


def test_minimal_ack_text():
    ack = build_ack("42", "AA", now=0)
    text = encode_hl7(ack)
    assert text.startswith("MSH|^~\\&|")
    assert "MSA|AA|42" in text


def test_parse_requires_msh():
    with pytest.raises(MissingMsh):
        parse_hl7("PID|1||42")
    with pytest.raises(MissingMsh):
        encode_hl7(Hl7Message("X", "1", (("PID", "1"),)))


def test_empty_segment_rejected():
    with pytest.raises(Exception):
        parse_hl7("MSH|^~\\&|a\r\rPID|1")


def test_illegal_field_text():
    with pytest.raises(IllegalFieldText):
        encode_hl7(Hl7Message("ACK", "1", (("MSH", "^~\\&", "a|b"),)))
    for char in "|^~\\&\r":
        with pytest.raises(IllegalFieldText):
            check_free_text(f"ab{char}cd")
    assert check_free_text("plain text 1.5") == "plain text 1.5"


def test_encode_parse_inverse_property():
    rng = random.Random(61)
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789 .,:-"
    for _ in range(100):
        segments = [tuple(["MSH", "^~\\&"] + [
            "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 8)))
            for _ in range(10)])]
        for _ in range(rng.randint(0, 5)):
            name = rng.choice(["PID", "OBR", "OBX", "NTE"])
            segments.append(tuple([name] + [
                "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 8)))
                for _ in range(rng.randint(1, 8))]))
        msg = parse_hl7(encode_hl7(Hl7Message("t", "c", tuple(segments))))
        assert msg.segments == tuple(segments)
        assert encode_hl7(msg) == encode_hl7(Hl7Message("t", "c", tuple(segments)))


def test_mllp_wrap_fixed_bytes():
    assert mllp_wrap("M") == bytes([0x0B, 0x4D, 0x1C, 0x0D])


def test_mllp_unwrap_roundtrip_property():
    rng = random.Random(67)
    for _ in range(100):
        text = "".join(rng.choice("MSH|^~\\&ABC123\r") for _ in range(rng.randint(0, 60)))
        assert mllp_unwrap(mllp_wrap(text)) == text


def test_mllp_unwrap_errors():
    with pytest.raises(BadFraming):
        mllp_unwrap(b"M\x1c\x0d")
    with pytest.raises(Incomplete):
        mllp_unwrap(bytes([0x0B, 0x4D, 0x1C]))  # missing trailing CR
    with pytest.raises(Incomplete):
        mllp_unwrap(bytes([0x0B]))


def test_mllp_stream_splits_messages():
    stream = MllpStream()
    stream.feed(mllp_wrap("one") + mllp_wrap("two"))
    assert stream.next_message() == "one"
    assert stream.next_message() == "two"
    assert stream.next_message() is None
    stream.feed(b"garbage")
    with pytest.raises(BadFraming):
        stream.next_message()


def test_control_ids_strictly_increasing():
    ids = [int(next_control_id()) for _ in range(100)]
    assert ids == sorted(ids)
    assert len(set(ids)) == len(ids)


def test_control_ids_unique_across_threads():
    seen = []
    lock = threading.Lock()

    def take():
        for _ in range(200):
            value = next_control_id()
            with lock:
                seen.append(value)

    threads = [threading.Thread(target=take) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(set(seen)) == len(seen)


def test_obx_number_formatting_property():
    rng = random.Random(71)
    for _ in range(500):
        value = rng.uniform(-500, 500)
        text = format_number(value)
        decimals = text.split(".")[1] if "." in text else ""
        assert len(decimals) <= 2
        assert abs(float(text) - value) <= 0.005 + 1e-12


def test_timestamp_roundtrip():
    for ts in (0, 1700000000, 2**31 - 1):
        assert parse_hl7_timestamp(hl7_timestamp(ts)) == ts


class AckStub:
    """One-shot MLLP responder with a scriptable acknowledgment code."""

    def __init__(self, code="AA", echo_control=True, fixed_control=None):
        stub = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                stream = MllpStream()
                while True:
                    data = self.request.recv(4096)
                    if not data:
                        return
                    stream.feed(data)
                    text = stream.next_message()
                    if text is None:
                        continue
                    stub.received.append(text)
                    control = stub.fixed_control
                    if control is None:
                        control = parse_hl7(text).control_id
                    ack = build_ack(control, stub.code, now=0)
                    self.request.sendall(mllp_wrap(encode_hl7(ack)))

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self.code = code
        self.fixed_control = fixed_control
        self.received: list[str] = []
        self._server = Server(("127.0.0.1", 0), Handler)
        self.port = self._server.server_address[1]
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()


FAST = RetryPolicy(attempts=3, backoff=(0.01, 0.02, 0.04), timeout=0.5)


def test_send_and_await_ack_positive():
    stub = AckStub("AA").start()
    try:
        msg = build_oru(CARD, RESULT, next_control_id(), now=0)
        ack = send_and_await_ack("127.0.0.1", stub.port, msg, FAST)
        assert ack == AckStatus("AA", msg.control_id)
        assert ack.accepted
    finally:
        stub.stop()


def test_send_and_await_ack_negative_is_status_not_error():
    stub = AckStub("AE").start()
    try:
        msg = build_oru(CARD, RESULT, next_control_id(), now=0)
        ack = send_and_await_ack("127.0.0.1", stub.port, msg, FAST)
        assert ack.code == "AE"
        assert not ack.accepted
    finally:
        stub.stop()


def test_send_and_await_ack_control_id_mismatch():
    stub = AckStub("AA", fixed_control="999999").start()
    try:
        msg = build_oru(CARD, RESULT, next_control_id(), now=0)
        with pytest.raises(ControlIdMismatch):
            send_and_await_ack("127.0.0.1", stub.port, msg, FAST)
    finally:
        stub.stop()


def test_send_times_out_after_three_attempts():
    # find a port nobody listens on
    import socket as s
    probe = s.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    msg = build_oru(CARD, RESULT, next_control_id(), now=0)
    started = time.monotonic()
    with pytest.raises(Timeout) as err:
        send_and_await_ack("127.0.0.1", port, msg, FAST)
    assert err.value.attempts == 3
    assert time.monotonic() - started < 5


def test_parse_ack_rejects_junk():
    with pytest.raises(Exception):
        parse_ack(encode_hl7(build_oru(CARD, RESULT, "5", now=0)))
