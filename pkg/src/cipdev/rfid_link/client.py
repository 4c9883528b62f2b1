"""Reader-side clients for the tag field.

ReaderClient speaks the framed protocol over TCP (the simulated USB/serial
reader port); LocalReader wraps an in-process FieldState with the same
surface, for embedding and tests.
"""

from __future__ import annotations

import socket
import threading

from .. import cip_codec
from .field import (
    BLOCK_COUNT, BLOCK_SIZE, FieldState, LinkError, TagNotInField,
    BlockOutOfRange, BadLength, ImageTooLarge,
)
from .framing import FrameDecoder, FramingError, frame_encode
from .simulator import (
    CMD_INVENTORY, CMD_READ_BLOCK, CMD_WRITE_BLOCK, CMD_FIELD_ADD_TAG,
    CMD_FIELD_REMOVE_TAG, STATUS_OK, STATUS_TAG_NOT_IN_FIELD,
    STATUS_BLOCK_OUT_OF_RANGE, STATUS_BAD_LENGTH,
)

USER_MEMORY = BLOCK_COUNT * BLOCK_SIZE


class ReaderLinkDown(LinkError):
    """The reader transport is unreachable or broke mid-exchange."""


_STATUS_ERRORS = {
    STATUS_TAG_NOT_IN_FIELD: TagNotInField,
    STATUS_BLOCK_OUT_OF_RANGE: BlockOutOfRange,
    STATUS_BAD_LENGTH: BadLength,
}


def _raise_status(status: int) -> None:
    if status == STATUS_OK:
        return
    exc = _STATUS_ERRORS.get(status)
    if exc is None:
        raise LinkError(f"unknown status 0x{status:02X}")
    raise exc(f"status 0x{status:02X}")


class ReaderClient:
    """Blocking request/reply client; safe for concurrent callers."""

    def __init__(self, host: str = "127.0.0.1", port: int = 4501,
                 timeout: float = 5.0):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._lock = threading.Lock()
        self._sock: socket.socket | None = None
        self._decoder = FrameDecoder()

    def connect(self) -> None:
        with self._lock:
            self._connect_locked()

    def _connect_locked(self) -> None:
        if self._sock is not None:
            return
        try:
            self._sock = socket.create_connection(
                (self.host, self.port), timeout=self.timeout)
        except OSError as exc:
            raise ReaderLinkDown(f"{self.host}:{self.port}: {exc}") from exc
        self._decoder = FrameDecoder()

    def close(self) -> None:
        with self._lock:
            if self._sock is not None:
                try:
                    self._sock.close()
                finally:
                    self._sock = None

    def _exchange(self, command: int, payload: bytes) -> bytes:
        with self._lock:
            self._connect_locked()
            try:
                self._sock.sendall(frame_encode(command, payload))
                while True:
                    try:
                        frame = self._decoder.next_frame()
                    except FramingError:
                        continue
                    if frame is not None:
                        reply_command, reply = frame
                        if reply_command != command:
                            raise LinkError(
                                f"reply command 0x{reply_command:02X} for 0x{command:02X}")
                        return reply
                    data = self._sock.recv(4096)
                    if not data:
                        raise OSError("connection closed")
                    self._decoder.feed(data)
            except OSError as exc:
                self._sock.close()
                self._sock = None
                raise ReaderLinkDown(str(exc)) from exc

    def inventory(self) -> list[int]:
        reply = self._exchange(CMD_INVENTORY, b"")
        count = reply[0]
        return [int.from_bytes(reply[1 + i * 8:9 + i * 8], "big")
                for i in range(count)]

    def read_block(self, uid: int, index: int) -> bytes:
        reply = self._exchange(CMD_READ_BLOCK, uid.to_bytes(8, "big") + bytes([index]))
        if len(reply) == BLOCK_SIZE:
            return reply
        _raise_status(reply[0])
        raise LinkError("empty reply")

    def write_block(self, uid: int, index: int, data: bytes) -> None:
        if len(data) != BLOCK_SIZE:
            raise BadLength(f"{len(data)} bytes, want {BLOCK_SIZE}")
        payload = uid.to_bytes(8, "big") + bytes([index]) + data
        _raise_status(self._exchange(CMD_WRITE_BLOCK, payload)[0])

    def read_full_card(self, uid: int) -> bytes:
        buffer = bytearray()
        for index in range(BLOCK_COUNT):
            buffer += self.read_block(uid, index)
            length = cip_codec.image_length(bytes(buffer))
            if length is not None and length <= len(buffer):
                return bytes(buffer[:length])
        return bytes(buffer)

    def write_full_card(self, uid: int, image: bytes) -> None:
        if len(image) > USER_MEMORY:
            raise ImageTooLarge(f"{len(image)} > {USER_MEMORY}")
        blocks_needed = (len(image) + BLOCK_SIZE - 1) // BLOCK_SIZE
        for index in range(blocks_needed):
            chunk = image[index * BLOCK_SIZE:(index + 1) * BLOCK_SIZE]
            self.write_block(uid, index, chunk.ljust(BLOCK_SIZE, b"\x00"))

    # Simulator control channel (used by the harness, not the device)

    def add_tag(self, uid: int, image: bytes | None = None) -> None:
        inline = image if image and len(image) <= 247 else None
        _raise_status(self._exchange(
            CMD_FIELD_ADD_TAG, uid.to_bytes(8, "big") + (inline or b""))[0])
        if image and inline is None:
            self.write_full_card(uid, image)

    def remove_tag(self, uid: int) -> None:
        _raise_status(self._exchange(CMD_FIELD_REMOVE_TAG, uid.to_bytes(8, "big"))[0])


class LocalReader:
    """In-process reader over a FieldState; mirrors ReaderClient."""

    def __init__(self, field_state: FieldState):
        self.field = field_state

    def connect(self) -> None:
        pass

    def close(self) -> None:
        pass

    def inventory(self) -> list[int]:
        return self.field.inventory()

    def read_block(self, uid: int, index: int) -> bytes:
        return self.field.read_block(uid, index)

    def write_block(self, uid: int, index: int, data: bytes) -> None:
        self.field.write_block(uid, index, data)

    def read_full_card(self, uid: int) -> bytes:
        return self.field.read_full_card(uid)

    def write_full_card(self, uid: int, image: bytes) -> None:
        self.field.write_full_card(uid, image)

    def add_tag(self, uid: int, image: bytes | None = None) -> None:
        self.field.add_tag(uid, image)

    def remove_tag(self, uid: int) -> None:
        self.field.remove_tag(uid)
