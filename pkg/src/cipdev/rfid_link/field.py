"""Simulated tag field: block-addressable tag memories plus enter/leave log."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from .. import cip_codec

BLOCK_COUNT = 32
BLOCK_SIZE = 16
USER_MEMORY = BLOCK_COUNT * BLOCK_SIZE  # 512 bytes, the CIP size budget


class LinkError(Exception):
    pass


class TagNotInField(LinkError):
    pass


class BlockOutOfRange(LinkError):
    pass


class BadLength(LinkError):
    pass


class ImageTooLarge(LinkError):
    pass


@dataclass
class TagMemory:
    uid: int
    blocks: list[bytearray] = field(
        default_factory=lambda: [bytearray(BLOCK_SIZE) for _ in range(BLOCK_COUNT)])


class FieldState:
    """Tags currently in the reader field; all access goes through one lock."""

    def __init__(self, clock=time.time):
        self._tags: dict[int, TagMemory] = {}
        self._events: list[tuple[float, str, int]] = []
        self._lock = threading.Lock()
        self._clock = clock

    def add_tag(self, uid: int, image: bytes | None = None) -> None:
        """Bring a tag into the field; re-adding replaces its memory."""
        with self._lock:
            self._tags[uid] = TagMemory(uid)
            self._events.append((self._clock(), "enter", uid))
        if image:
            self.write_full_card(uid, image)

    def remove_tag(self, uid: int) -> None:
        with self._lock:
            if uid not in self._tags:
                raise TagNotInField(f"uid {uid}")
            del self._tags[uid]
            self._events.append((self._clock(), "leave", uid))

    def events(self) -> list[tuple[float, str, int]]:
        with self._lock:
            return list(self._events)

    def inventory(self) -> list[int]:
        with self._lock:
            return sorted(self._tags)

    def read_block(self, uid: int, index: int) -> bytes:
        with self._lock:
            tag = self._tags.get(uid)
            if tag is None:
                raise TagNotInField(f"uid {uid}")
            if not 0 <= index < BLOCK_COUNT:
                raise BlockOutOfRange(f"index {index}")
            return bytes(tag.blocks[index])

    def write_block(self, uid: int, index: int, data: bytes) -> None:
        if len(data) != BLOCK_SIZE:
            raise BadLength(f"{len(data)} bytes, want {BLOCK_SIZE}")
        with self._lock:
            tag = self._tags.get(uid)
            if tag is None:
                raise TagNotInField(f"uid {uid}")
            if not 0 <= index < BLOCK_COUNT:
                raise BlockOutOfRange(f"index {index}")
            tag.blocks[index] = bytearray(data)

    def read_full_card(self, uid: int) -> bytes:
        """Read blocks until the self-describing card layout is satisfied.

        Trailing block padding is stripped. If no consistent length can be
        derived the whole user memory is returned opaquely; interpreting it
        is the codec's job.
        """
        buffer = bytearray()
        for index in range(BLOCK_COUNT):
            buffer += self.read_block(uid, index)
            length = cip_codec.image_length(bytes(buffer))
            if length is not None and length <= len(buffer):
                return bytes(buffer[:length])
        return bytes(buffer)

    def write_full_card(self, uid: int, image: bytes) -> None:
        """Write an image from block 0, zero-padding the final block."""
        if len(image) > USER_MEMORY:
            raise ImageTooLarge(f"{len(image)} > {USER_MEMORY}")
        blocks_needed = (len(image) + BLOCK_SIZE - 1) // BLOCK_SIZE
        for index in range(blocks_needed):
            chunk = image[index * BLOCK_SIZE:(index + 1) * BLOCK_SIZE]
            self.write_block(uid, index, chunk.ljust(BLOCK_SIZE, b"\x00"))
