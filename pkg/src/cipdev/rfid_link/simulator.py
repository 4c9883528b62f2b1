"""TCP tag-field simulator speaking the framed reader protocol.

Request/reply per frame; the reply reuses the request command code.
Commands:

    0x01 INVENTORY        payload empty          reply: count + 8-byte uids
    0x02 READ_BLOCK       uid(8) index(1)        reply: 16 data bytes, or status
    0x03 WRITE_BLOCK      uid(8) index(1) data   reply: status
    0x04 FIELD_ADD_TAG    uid(8) [initial image] reply: status (control channel)
    0x05 FIELD_REMOVE_TAG uid(8)                 reply: status (control channel)

Status bytes: 0x00 OK, 0x01 TagNotInField, 0x02 BlockOutOfRange,
0x03 BadLength. Corrupt frames are dropped; the decoder resynchronizes.
"""

from __future__ import annotations

import logging
import socketserver
import threading

from .field import (
    BLOCK_SIZE, FieldState, TagNotInField, BlockOutOfRange, BadLength,
    ImageTooLarge,
)
from .framing import FrameDecoder, FramingError, frame_encode

logger = logging.getLogger(__name__)

CMD_INVENTORY = 0x01
CMD_READ_BLOCK = 0x02
CMD_WRITE_BLOCK = 0x03
CMD_FIELD_ADD_TAG = 0x04
CMD_FIELD_REMOVE_TAG = 0x05

STATUS_OK = 0x00
STATUS_TAG_NOT_IN_FIELD = 0x01
STATUS_BLOCK_OUT_OF_RANGE = 0x02
STATUS_BAD_LENGTH = 0x03

# INVENTORY replies carry count + 8 bytes per uid inside a 255-byte payload
MAX_INVENTORY_TAGS = 31


def _status_of(exc: Exception) -> int:
    if isinstance(exc, TagNotInField):
        return STATUS_TAG_NOT_IN_FIELD
    if isinstance(exc, BlockOutOfRange):
        return STATUS_BLOCK_OUT_OF_RANGE
    if isinstance(exc, (BadLength, ImageTooLarge)):
        return STATUS_BAD_LENGTH
    raise exc


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        decoder = FrameDecoder()
        field: FieldState = self.server.field_state
        while True:
            try:
                data = self.request.recv(4096)
            except OSError:
                return
            if not data:
                return
            decoder.feed(data)
            while True:
                try:
                    frame = decoder.next_frame()
                except FramingError as exc:
                    logger.debug("dropping corrupt frame: %s", exc)
                    continue
                if frame is None:
                    break
                command, payload = frame
                reply = self._dispatch(field, command, payload)
                try:
                    self.request.sendall(frame_encode(command, reply))
                except OSError:
                    return

    def _dispatch(self, field: FieldState, command: int, payload: bytes) -> bytes:
        try:
            if command == CMD_INVENTORY:
                uids = field.inventory()[:MAX_INVENTORY_TAGS]
                out = bytes([len(uids)])
                for uid in uids:
                    out += uid.to_bytes(8, "big")
                return out
            if command == CMD_READ_BLOCK:
                if len(payload) != 9:
                    return bytes([STATUS_BAD_LENGTH])
                uid = int.from_bytes(payload[:8], "big")
                return field.read_block(uid, payload[8])
            if command == CMD_WRITE_BLOCK:
                if len(payload) != 9 + BLOCK_SIZE:
                    return bytes([STATUS_BAD_LENGTH])
                uid = int.from_bytes(payload[:8], "big")
                field.write_block(uid, payload[8], payload[9:])
                return bytes([STATUS_OK])
            if command == CMD_FIELD_ADD_TAG:
                if len(payload) < 8:
                    return bytes([STATUS_BAD_LENGTH])
                uid = int.from_bytes(payload[:8], "big")
                field.add_tag(uid, payload[8:] or None)
                return bytes([STATUS_OK])
            if command == CMD_FIELD_REMOVE_TAG:
                if len(payload) != 8:
                    return bytes([STATUS_BAD_LENGTH])
                field.remove_tag(int.from_bytes(payload, "big"))
                return bytes([STATUS_OK])
            logger.warning("unknown command 0x%02X", command)
            return bytes([STATUS_BAD_LENGTH])
        except Exception as exc:  # mapped to a status byte
            return bytes([_status_of(exc)])


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class TagSimulator:
    """Runs the tag-field service on a background thread."""

    def __init__(self, field_state: FieldState | None = None,
                 host: str = "127.0.0.1", port: int = 4501):
        self.field = field_state if field_state is not None else FieldState()
        self._server = _Server((host, port), _Handler)
        self._server.field_state = self.field
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="tagsim", daemon=True)
        self._thread.start()
        logger.info("tag simulator listening on %s:%d",
                    self._server.server_address[0], self.port)

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)
