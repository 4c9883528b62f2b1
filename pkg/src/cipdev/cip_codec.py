"""Binary codec for the CIP (Personal health Information Card) image.

Card layout, version 1 (all integers big-endian, strings length-prefixed
with one byte):

    offset  size  field
    0       2     magic 0x43 0x49 ("CI")
    2       1     version (0x01)
    3       8     serial
    11      1     flags (bit0 hiv, bit1 transmittable, bit2 chronic)
    12      1     blood group (0=O 1=A 2=B 3=AB 0xFF=Unknown)
    13      1     rh (0=Negative 1=Positive 0xFF=Unknown)
    14      2     language (lowercase ascii)
    16      ...   server URI (len + bytes)
    ...     ...   allergy count + entries (len + bytes each)
    ...     ...   condition count + entries
    ...     8     last_modified (unix seconds)
    ...     ...   modifier id (len + bytes)
    ...     2     CRC-16/CCITT-FALSE over all preceding bytes

The whole image must fit the simulated tag user memory (512 bytes); the
encoder enforces that budget after the per-field bounds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

MAGIC = b"\x43\x49"
VERSION = 1
MAX_IMAGE_BYTES = 512
MAX_URI_BYTES = 128
MAX_LIST_ENTRIES = 16
MAX_ENTRY_BYTES = 32
MAX_MODIFIER_BYTES = 32

_UNKNOWN_CODE = 0xFF


class CipError(Exception):
    """Base class for card codec failures."""


class InvariantViolation(CipError):
    def __init__(self, field_name: str, detail: str = ""):
        self.field = field_name
        msg = f"invariant violated on field '{field_name}'"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class BadMagic(CipError):
    pass


class UnsupportedVersion(CipError):
    pass


class CrcMismatch(CipError):
    pass


class Truncated(CipError):
    pass


class ImmutableField(CipError):
    def __init__(self, field_name: str):
        self.field = field_name
        super().__init__(f"field '{field_name}' cannot be patched")


class BloodGroup(enum.Enum):
    O = "O"
    A = "A"
    B = "B"
    AB = "AB"
    UNKNOWN = "Unknown"


class Rh(enum.Enum):
    NEGATIVE = "Negative"
    POSITIVE = "Positive"
    UNKNOWN = "Unknown"


_BLOOD_CODES = {BloodGroup.O: 0, BloodGroup.A: 1, BloodGroup.B: 2,
                BloodGroup.AB: 3, BloodGroup.UNKNOWN: _UNKNOWN_CODE}
_BLOOD_FROM_CODE = {v: k for k, v in _BLOOD_CODES.items()}
_RH_CODES = {Rh.NEGATIVE: 0, Rh.POSITIVE: 1, Rh.UNKNOWN: _UNKNOWN_CODE}
_RH_FROM_CODE = {v: k for k, v in _RH_CODES.items()}

_U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class CipCard:
    """Decoded card record."""

    serial: int
    version: int = VERSION
    blood_group: BloodGroup = BloodGroup.UNKNOWN
    rh: Rh = Rh.UNKNOWN
    hiv_positive: bool = False
    transmittable_disease: bool = False
    chronic_disease: bool = False
    language: str = "en"
    server_uri: str = "http://s/"
    allergies: tuple[str, ...] = ()
    conditions: tuple[str, ...] = ()
    last_modified: int = 0
    modifier_id: str = ""

    def __post_init__(self):
        # tolerate lists from JSON callers; the record itself stays hashable
        if isinstance(self.allergies, list):
            object.__setattr__(self, "allergies", tuple(self.allergies))
        if isinstance(self.conditions, list):
            object.__setattr__(self, "conditions", tuple(self.conditions))


# Patchable card fields, i.e. everything except serial/version and the two
# audit fields that apply_update stamps itself.
PATCHABLE_FIELDS = (
    "blood_group", "rh", "hiv_positive", "transmittable_disease",
    "chronic_disease", "language", "server_uri", "allergies", "conditions",
)


@dataclass
class CipPatch:
    """Partial card update; None means "leave unchanged"."""

    blood_group: BloodGroup | None = None
    rh: Rh | None = None
    hiv_positive: bool | None = None
    transmittable_disease: bool | None = None
    chronic_disease: bool | None = None
    language: str | None = None
    server_uri: str | None = None
    allergies: tuple[str, ...] | None = None
    conditions: tuple[str, ...] | None = None

    @classmethod
    def from_json(cls, obj: dict) -> "CipPatch":
        """Build a patch from a JSON object, rejecting immutable fields."""
        if not isinstance(obj, dict):
            raise InvariantViolation("patch", "patch must be a JSON object")
        for key in ("serial", "version", "last_modified", "modifier_id"):
            if key in obj:
                raise ImmutableField(key)
        unknown = set(obj) - set(PATCHABLE_FIELDS)
        if unknown:
            raise InvariantViolation(sorted(unknown)[0], "unknown patch field")
        kwargs = dict(obj)
        if "blood_group" in kwargs:
            kwargs["blood_group"] = _enum_from_json(BloodGroup, kwargs["blood_group"], "blood_group")
        if "rh" in kwargs:
            kwargs["rh"] = _enum_from_json(Rh, kwargs["rh"], "rh")
        if "allergies" in kwargs:
            kwargs["allergies"] = tuple(kwargs["allergies"])
        if "conditions" in kwargs:
            kwargs["conditions"] = tuple(kwargs["conditions"])
        return cls(**kwargs)


def _enum_from_json(enum_cls, value, field_name):
    for member in enum_cls:
        if member.value == value:
            return member
    raise InvariantViolation(field_name, f"unknown value {value!r}")


# ---------------------------------------------------------------------------
# CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, no reflection, no xorout.
# Table-driven; the test suite checks it against an independent bitwise oracle.

def _build_crc_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
        table.append(crc)
    return tuple(table)


_CRC_TABLE = _build_crc_table()


def compute_crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE of *data* (empty input yields 0xFFFF)."""
    crc = 0xFFFF
    for byte in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[((crc >> 8) ^ byte) & 0xFF]
    return crc


# ---------------------------------------------------------------------------
# Validation

def _check_text(value: str, field_name: str, max_bytes: int, min_bytes: int = 0,
                ascii_only: bool = False) -> bytes:
    if not isinstance(value, str):
        raise InvariantViolation(field_name, "expected a string")
    try:
        raw = value.encode("ascii" if ascii_only else "utf-8")
    except UnicodeEncodeError:
        raise InvariantViolation(field_name, "not encodable")
    if not (min_bytes <= len(raw) <= max_bytes):
        raise InvariantViolation(
            field_name, f"{len(raw)} bytes outside {min_bytes}..{max_bytes}")
    return raw


def validate_card(card: CipCard) -> None:
    """Raise InvariantViolation on the first field out of bounds."""
    if not isinstance(card.serial, int) or not (0 < card.serial <= _U64_MAX):
        raise InvariantViolation("serial", "must be a positive 64-bit integer")
    if card.version != VERSION:
        raise InvariantViolation("version", f"only version {VERSION} supported")
    if not isinstance(card.blood_group, BloodGroup):
        raise InvariantViolation("blood_group", "not a BloodGroup")
    if not isinstance(card.rh, Rh):
        raise InvariantViolation("rh", "not an Rh value")
    for flag in ("hiv_positive", "transmittable_disease", "chronic_disease"):
        if not isinstance(getattr(card, flag), bool):
            raise InvariantViolation(flag, "must be a boolean")
    lang = card.language
    if not (isinstance(lang, str) and len(lang) == 2 and
            all("a" <= c <= "z" for c in lang)):
        raise InvariantViolation("language", "must be 2 lowercase ascii letters")
    _check_text(card.server_uri, "server_uri", MAX_URI_BYTES, min_bytes=1)
    for list_name in ("allergies", "conditions"):
        entries = getattr(card, list_name)
        if len(entries) > MAX_LIST_ENTRIES:
            raise InvariantViolation(list_name, f"more than {MAX_LIST_ENTRIES} entries")
        for entry in entries:
            _check_text(entry, list_name, MAX_ENTRY_BYTES, min_bytes=1)
    if not isinstance(card.last_modified, int) or not (0 <= card.last_modified <= _U64_MAX):
        raise InvariantViolation("last_modified", "must be unsigned 64-bit")
    _check_text(card.modifier_id, "modifier_id", MAX_MODIFIER_BYTES, ascii_only=True)


# ---------------------------------------------------------------------------
# Encode / decode

def encode_cip(card: CipCard) -> bytes:
    """Encode *card* to its version-1 image, CRC included."""
    validate_card(card)
    out = bytearray()
    out += MAGIC
    out.append(VERSION)
    out += card.serial.to_bytes(8, "big")
    flags = (int(card.hiv_positive)
             | int(card.transmittable_disease) << 1
             | int(card.chronic_disease) << 2)
    out.append(flags)
    out.append(_BLOOD_CODES[card.blood_group])
    out.append(_RH_CODES[card.rh])
    out += card.language.encode("ascii")
    _put_str(out, card.server_uri)
    for list_name in ("allergies", "conditions"):
        entries = getattr(card, list_name)
        out.append(len(entries))
        for entry in entries:
            _put_str(out, entry)
    out += card.last_modified.to_bytes(8, "big")
    _put_str(out, card.modifier_id)
    if len(out) + 2 > MAX_IMAGE_BYTES:
        raise InvariantViolation(
            "image", f"encoded size {len(out) + 2} exceeds {MAX_IMAGE_BYTES}")
    out += compute_crc16(bytes(out)).to_bytes(2, "big")
    return bytes(out)


def _put_str(out: bytearray, value: str) -> None:
    raw = value.encode("utf-8")
    out.append(len(raw))
    out += raw


class _Cursor:
    """Byte reader that raises Truncated on overrun."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise Truncated(f"needed {n} bytes at offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def byte(self) -> int:
        return self.take(1)[0]

    def lstr(self, field_name: str) -> str:
        raw = self.take(self.byte())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise InvariantViolation(field_name, "invalid utf-8")


def decode_cip(image: bytes) -> CipCard:
    """Decode and fully validate a card image."""
    if len(image) < 2:
        raise Truncated("image shorter than CRC")
    body, stored = image[:-2], int.from_bytes(image[-2:], "big")
    if compute_crc16(body) != stored:
        raise CrcMismatch(f"stored 0x{stored:04X}")
    cur = _Cursor(body)
    if cur.take(2) != MAGIC:
        raise BadMagic("not a CIP image")
    version = cur.byte()
    if version != VERSION:
        raise UnsupportedVersion(f"version {version}")
    serial = int.from_bytes(cur.take(8), "big")
    flags = cur.byte()
    if flags & ~0x07:
        raise InvariantViolation("flags", "reserved bits set")
    blood_code = cur.byte()
    if blood_code not in _BLOOD_FROM_CODE:
        raise InvariantViolation("blood_group", f"code 0x{blood_code:02X}")
    rh_code = cur.byte()
    if rh_code not in _RH_FROM_CODE:
        raise InvariantViolation("rh", f"code 0x{rh_code:02X}")
    try:
        language = cur.take(2).decode("ascii")
    except UnicodeDecodeError:
        raise InvariantViolation("language", "not ascii")
    server_uri = cur.lstr("server_uri")
    lists: dict[str, tuple[str, ...]] = {}
    for list_name in ("allergies", "conditions"):
        count = cur.byte()
        lists[list_name] = tuple(cur.lstr(list_name) for _ in range(count))
    last_modified = int.from_bytes(cur.take(8), "big")
    modifier_id = cur.lstr("modifier_id")
    if cur.pos != len(body):
        raise Truncated(f"{len(body) - cur.pos} trailing bytes")
    card = CipCard(
        serial=serial,
        version=version,
        blood_group=_BLOOD_FROM_CODE[blood_code],
        rh=_RH_FROM_CODE[rh_code],
        hiv_positive=bool(flags & 1),
        transmittable_disease=bool(flags & 2),
        chronic_disease=bool(flags & 4),
        language=language,
        server_uri=server_uri,
        allergies=lists["allergies"],
        conditions=lists["conditions"],
        last_modified=last_modified,
        modifier_id=modifier_id,
    )
    validate_card(card)
    return card


def image_length(buffer: bytes) -> int | None:
    """Total image length implied by the self-describing layout.

    Returns None when *buffer* is too short to tell. Used by the reader to
    strip trailing block padding; no CRC or invariant checking happens here.
    """
    try:
        cur = _Cursor(buffer)
        cur.take(16)                     # magic..language
        cur.take(cur.byte())             # uri
        for _ in range(2):               # allergies, conditions
            for _ in range(cur.byte()):
                cur.take(cur.byte())
        cur.take(8)                      # last_modified
        cur.take(cur.byte())             # modifier
        return cur.pos + 2               # + CRC
    except Truncated:
        return None


def apply_update(card: CipCard, patch: CipPatch, modifier: str, now: int) -> CipCard:
    """Apply *patch* and stamp the audit fields; the result is re-validated."""
    changes = {}
    for name in PATCHABLE_FIELDS:
        value = getattr(patch, name)
        if value is not None:
            changes[name] = value
    updated = replace(card, last_modified=now, modifier_id=modifier, **changes)
    validate_card(updated)
    return updated


# ---------------------------------------------------------------------------
# JSON projection (used by the device API and the CLI)

def card_to_json(card: CipCard) -> dict:
    return {
        "serial": card.serial,
        "version": card.version,
        "blood_group": card.blood_group.value,
        "rh": card.rh.value,
        "hiv_positive": card.hiv_positive,
        "transmittable_disease": card.transmittable_disease,
        "chronic_disease": card.chronic_disease,
        "language": card.language,
        "server_uri": card.server_uri,
        "allergies": list(card.allergies),
        "conditions": list(card.conditions),
        "last_modified": card.last_modified,
        "modifier_id": card.modifier_id,
    }


def card_from_json(obj: dict) -> CipCard:
    if not isinstance(obj, dict):
        raise InvariantViolation("card", "expected a JSON object")
    known = {f for f in CipCard.__dataclass_fields__}
    unknown = set(obj) - known
    if unknown:
        raise InvariantViolation(sorted(unknown)[0], "unknown card field")
    kwargs = dict(obj)
    if "blood_group" in kwargs:
        kwargs["blood_group"] = _enum_from_json(BloodGroup, kwargs["blood_group"], "blood_group")
    if "rh" in kwargs:
        kwargs["rh"] = _enum_from_json(Rh, kwargs["rh"], "rh")
    for list_name in ("allergies", "conditions"):
        if list_name in kwargs:
            kwargs[list_name] = tuple(kwargs[list_name])
    if "serial" not in kwargs:
        raise InvariantViolation("serial", "missing")
    card = CipCard(**kwargs)
    validate_card(card)
    return card
