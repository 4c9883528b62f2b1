"""Simulated reader/tag link: wire framing, tag field state, TCP simulator."""

from .framing import (
    SOF, EOF, PayloadTooLarge, FrameCrcError, BadDelimiter, Incomplete,
    FrameDecoder, frame_encode, frame_decode,
)
from .field import (
    BLOCK_COUNT, BLOCK_SIZE, LinkError, TagNotInField, BlockOutOfRange,
    BadLength, ImageTooLarge, TagMemory, FieldState,
)
from .simulator import (
    CMD_INVENTORY, CMD_READ_BLOCK, CMD_WRITE_BLOCK, CMD_FIELD_ADD_TAG,
    CMD_FIELD_REMOVE_TAG, STATUS_OK, STATUS_TAG_NOT_IN_FIELD,
    STATUS_BLOCK_OUT_OF_RANGE, STATUS_BAD_LENGTH, TagSimulator,
)
from .client import ReaderClient, LocalReader, ReaderLinkDown

__all__ = [
    "SOF", "EOF", "PayloadTooLarge", "FrameCrcError", "BadDelimiter",
    "Incomplete", "FrameDecoder", "frame_encode", "frame_decode",
    "BLOCK_COUNT", "BLOCK_SIZE", "LinkError", "TagNotInField",
    "BlockOutOfRange", "BadLength", "ImageTooLarge", "TagMemory",
    "FieldState", "CMD_INVENTORY", "CMD_READ_BLOCK", "CMD_WRITE_BLOCK",
    "CMD_FIELD_ADD_TAG", "CMD_FIELD_REMOVE_TAG", "STATUS_OK",
    "STATUS_TAG_NOT_IN_FIELD", "STATUS_BLOCK_OUT_OF_RANGE",
    "STATUS_BAD_LENGTH", "TagSimulator", "ReaderClient", "LocalReader",
    "ReaderLinkDown",
]
