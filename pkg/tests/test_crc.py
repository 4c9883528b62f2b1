"""CRC-16 checked against an independent bitwise shift-register oracle."""

import random

from cipdev.cip_codec import compute_crc16


def crc16_oracle(data: bytes) -> int:
    """Bit-at-a-time CRC-16/CCITT-FALSE, written before the table version."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


def test_fixed_vectors():
    assert compute_crc16(b"") == 0xFFFF
    assert compute_crc16(b"123456789") == 0x29B1
    assert compute_crc16(b"\x00") == 0xE1F0


def test_oracle_agrees_on_fixed_vectors():
    assert crc16_oracle(b"") == 0xFFFF
    assert crc16_oracle(b"123456789") == 0x29B1
    assert crc16_oracle(b"\x00") == 0xE1F0


def test_matches_oracle_on_random_inputs():
    rng = random.Random(0xC1C1)
    for _ in range(500):
        data = rng.randbytes(rng.randint(0, 64))
        assert compute_crc16(data) == crc16_oracle(data)


def test_single_byte_flip_always_changes_crc():
    # the generator polynomial has a nonzero constant term, so any single
    # byte difference must change the checksum
    rng = random.Random(7)
    data = bytearray(rng.randbytes(48))
    baseline = compute_crc16(bytes(data))
    for pos in range(len(data)):
        flipped = bytearray(data)
        flipped[pos] ^= 0xFF
        assert compute_crc16(bytes(flipped)) != baseline
