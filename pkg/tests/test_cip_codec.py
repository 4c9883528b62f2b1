"""Card codec: layout, roundtrips, bounds, integrity, updates, JSON."""

import random

import pytest

from cipdev.cip_codec import (
    MAX_IMAGE_BYTES, BadMagic, BloodGroup, CipCard, CipPatch, CrcMismatch,
    ImmutableField, InvariantViolation, Rh, Truncated, UnsupportedVersion,
    apply_update, card_from_json, card_to_json, decode_cip, encode_cip,
    image_length,
)

from conftest import random_card

MINIMAL = CipCard(serial=1)


def test_minimal_card_is_39_bytes():
    assert len(encode_cip(MINIMAL)) == 39


def test_roundtrip_minimal():
    assert decode_cip(encode_cip(MINIMAL)) == MINIMAL


def test_roundtrip_random_cards():
    rng = random.Random(2024)
    for _ in range(200):
        card = random_card(rng)
        image = encode_cip(card)
        assert len(image) <= MAX_IMAGE_BYTES
        assert decode_cip(image) == card


def test_too_many_allergies_rejected():
    card = CipCard(serial=1, allergies=tuple(f"a{i}" for i in range(17)))
    with pytest.raises(InvariantViolation) as err:
        encode_cip(card)
    assert err.value.field == "allergies"


@pytest.mark.parametrize("field,value", [
    ("serial", 0),
    ("serial", -3),
    ("language", "EN"),
    ("language", "e"),
    ("language", "e1"),
    ("server_uri", ""),
    ("server_uri", "x" * 129),
    ("modifier_id", "m" * 33),
    ("last_modified", -1),
])
def test_field_bounds(field, value):
    card = CipCard(**{**{"serial": 1}, field: value})
    with pytest.raises(InvariantViolation) as err:
        encode_cip(card)
    assert err.value.field == field


def test_entry_length_bounds():
    with pytest.raises(InvariantViolation):
        encode_cip(CipCard(serial=1, allergies=("x" * 33,)))
    with pytest.raises(InvariantViolation):
        encode_cip(CipCard(serial=1, conditions=("",)))
    # multi-byte utf-8 counts in bytes, not characters
    with pytest.raises(InvariantViolation):
        encode_cip(CipCard(serial=1, allergies=("日" * 11,)))


def test_maximal_card_exceeds_budget_and_is_rejected():
    card = CipCard(
        serial=2**64 - 1,
        server_uri="u" * 128,
        allergies=tuple("a" * 32 for _ in range(16)),
        conditions=tuple("c" * 32 for _ in range(16)),
        modifier_id="m" * 32,
    )
    with pytest.raises(InvariantViolation) as err:
        encode_cip(card)
    assert err.value.field == "image"


def test_largest_fitting_card_encodes():
    # per-field bounds are fine; shrink the lists until the budget holds:
    # 16 fixed + 129 uri + (1+5*33) + (1+4*33) + 8 + 33 + 2 = 487
    card = CipCard(
        serial=1, server_uri="u" * 128,
        allergies=tuple("a" * 32 for _ in range(5)),
        conditions=tuple("c" * 32 for _ in range(4)),
        modifier_id="m" * 32,
    )
    image = encode_cip(card)
    assert len(image) == 487
    assert len(image) <= MAX_IMAGE_BYTES
    assert decode_cip(image) == card


def test_decode_truncated():
    with pytest.raises(Truncated):
        decode_cip(b"\x43")
    with pytest.raises(Truncated):
        decode_cip(b"")


def test_decode_bad_magic():
    image = bytearray(encode_cip(MINIMAL))
    image[0] = 0x58
    # recompute the CRC so corruption detection does not mask the magic check
    from cipdev.cip_codec import compute_crc16
    image[-2:] = compute_crc16(bytes(image[:-2])).to_bytes(2, "big")
    with pytest.raises(BadMagic):
        decode_cip(bytes(image))


def test_decode_unsupported_version():
    from cipdev.cip_codec import compute_crc16
    image = bytearray(encode_cip(MINIMAL))
    image[2] = 9
    image[-2:] = compute_crc16(bytes(image[:-2])).to_bytes(2, "big")
    with pytest.raises(UnsupportedVersion):
        decode_cip(bytes(image))


def test_decode_reserved_flag_bits():
    from cipdev.cip_codec import compute_crc16
    image = bytearray(encode_cip(MINIMAL))
    image[11] |= 0x80
    image[-2:] = compute_crc16(bytes(image[:-2])).to_bytes(2, "big")
    with pytest.raises(InvariantViolation) as err:
        decode_cip(bytes(image))
    assert err.value.field == "flags"


def test_decode_unassigned_enum_code():
    from cipdev.cip_codec import compute_crc16
    image = bytearray(encode_cip(MINIMAL))
    image[12] = 0x07  # not a blood-group code
    image[-2:] = compute_crc16(bytes(image[:-2])).to_bytes(2, "big")
    with pytest.raises(InvariantViolation) as err:
        decode_cip(bytes(image))
    assert err.value.field == "blood_group"


def test_every_single_byte_flip_detected():
    from test_crc import crc16_oracle
    reference = encode_cip(CipCard(
        serial=42, blood_group=BloodGroup.A, rh=Rh.POSITIVE,
        language="ro", server_uri="http://sim/",
        allergies=("penicilina",), conditions=("diabet",),
        last_modified=1700000000, modifier_id="dr.pop"))
    for pos in range(len(reference)):
        corrupted = bytearray(reference)
        corrupted[pos] ^= 0xFF
        # the independent oracle confirms the stored CRC no longer matches
        assert (crc16_oracle(bytes(corrupted[:-2]))
                != int.from_bytes(corrupted[-2:], "big"))
        with pytest.raises(CrcMismatch):
            decode_cip(bytes(corrupted))


def test_image_length_matches_encoding():
    rng = random.Random(5)
    for _ in range(50):
        image = encode_cip(random_card(rng))
        assert image_length(image) == len(image)
        # padded to tag blocks, the implied length still strips correctly
        padded = image + b"\x00" * (16 - len(image) % 16)
        assert image_length(padded) == len(image)
    assert image_length(b"\x43\x49") is None


def test_apply_update_patch_semantics():
    updated = apply_update(MINIMAL, CipPatch(blood_group=BloodGroup.A),
                           "dr.pop", 100)
    assert updated.blood_group is BloodGroup.A
    assert updated.last_modified == 100
    assert updated.modifier_id == "dr.pop"
    assert updated.serial == MINIMAL.serial
    assert updated.version == MINIMAL.version


def test_apply_update_empty_patch_touches_only_audit_fields():
    updated = apply_update(MINIMAL, CipPatch(), "x", 7)
    assert updated.last_modified == 7
    assert updated.modifier_id == "x"
    reverted = apply_update(updated, CipPatch(), MINIMAL.modifier_id,
                            MINIMAL.last_modified)
    assert reverted == MINIMAL


def test_apply_update_validates_result():
    with pytest.raises(InvariantViolation):
        apply_update(MINIMAL, CipPatch(server_uri=""), "x", 0)


def test_patch_rejects_immutable_fields():
    with pytest.raises(ImmutableField):
        CipPatch.from_json({"serial": 2})
    with pytest.raises(ImmutableField):
        CipPatch.from_json({"version": 2})
    with pytest.raises(InvariantViolation):
        CipPatch.from_json({"bogus": 1})


def test_json_projection_roundtrip():
    rng = random.Random(11)
    for _ in range(50):
        card = random_card(rng)
        assert card_from_json(card_to_json(card)) == card


def test_json_field_names():
    projection = card_to_json(MINIMAL)
    assert set(projection) == {
        "serial", "version", "blood_group", "rh", "hiv_positive",
        "transmittable_disease", "chronic_disease", "language", "server_uri",
        "allergies", "conditions", "last_modified", "modifier_id"}
    assert projection["blood_group"] == "Unknown"
    assert projection["rh"] == "Unknown"
