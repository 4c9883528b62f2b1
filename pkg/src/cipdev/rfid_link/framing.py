"""Byte-stream framing for the reader link.

One frame: SOF 0xAA | length byte (= payload length) | command byte |
payload | CRC-16 hi | CRC-16 lo | EOF 0x55. The CRC covers length, command
and payload. Total framed length is payload length + 6.

The decoder resynchronizes after a bad frame by scanning forward to the
next 0xAA.
"""

from __future__ import annotations

from ..cip_codec import compute_crc16

SOF = 0xAA
EOF = 0x55
MAX_PAYLOAD = 255
_OVERHEAD = 6  # SOF + length + command + CRC(2) + EOF


class FramingError(Exception):
    pass


class PayloadTooLarge(FramingError):
    pass


class FrameCrcError(FramingError):
    pass


class BadDelimiter(FramingError):
    pass


class Incomplete(FramingError):
    """The stream does not yet hold a complete frame."""


def frame_encode(command: int, payload: bytes = b"") -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"{len(payload)} > {MAX_PAYLOAD}")
    if not 0 <= command <= 0xFF:
        raise ValueError(f"command {command} outside one byte")
    body = bytes([len(payload), command]) + payload
    crc = compute_crc16(body)
    return bytes([SOF]) + body + crc.to_bytes(2, "big") + bytes([EOF])


class FrameDecoder:
    """Incremental decoder over a byte stream.

    feed() appends raw bytes; next_frame() pops the next frame or returns
    None when more bytes are needed. A corrupt frame raises (FrameCrcError
    or BadDelimiter) and the decoder skips its SOF so the following call
    rescans from the next candidate.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> None:
        self._buf += data

    def pending(self) -> int:
        return len(self._buf)

    def next_frame(self) -> tuple[int, bytes] | None:
        while True:
            start = self._buf.find(SOF)
            if start < 0:
                self._buf.clear()
                return None
            if start:
                del self._buf[:start]
            if len(self._buf) < _OVERHEAD:
                return None
            plen = self._buf[1]
            total = plen + _OVERHEAD
            if len(self._buf) < total:
                return None
            frame = bytes(self._buf[:total])
            if frame[-1] != EOF:
                del self._buf[0:1]
                raise BadDelimiter(f"EOF byte 0x{frame[-1]:02X}")
            body = frame[1:3 + plen]
            stored = int.from_bytes(frame[3 + plen:5 + plen], "big")
            if compute_crc16(body) != stored:
                del self._buf[0:1]
                raise FrameCrcError(f"stored 0x{stored:04X}")
            del self._buf[:total]
            return frame[2], frame[3:3 + plen]


def frame_decode(stream: bytes) -> tuple[int, bytes]:
    """Decode the first complete valid frame in *stream*.

    Leading non-SOF bytes are skipped. Raises Incomplete when no full frame
    is present, FrameCrcError / BadDelimiter on a corrupt one.
    """
    decoder = FrameDecoder()
    decoder.feed(stream)
    result = decoder.next_frame()
    if result is None:
        raise Incomplete("no complete frame in stream")
    return result
