import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdiqkd.otp import (
    InsufficientKeyError,
    KeyFileError,
    KeyMaterial,
    dump_key,
    generate_key,
    load_key,
    otp_xor,
    read_key_file,
    write_key_file,
    xor_file,
)


def test_zero_key_is_identity():
    msg = b"time-bin qubits"
    out, key = otp_xor(msg, KeyMaterial(np.zeros(8 * len(msg), np.uint8)))
    assert out == msg
    assert key.remaining == 0


@settings(max_examples=300, deadline=None)
@given(msg=st.binary(max_size=256), extra=st.integers(0, 64), offset=st.integers(0, 64),
       seed=st.integers(0, 2**32))
def test_involution_at_offset(msg, extra, offset, seed):
    key = generate_key(8 * len(msg) + offset + extra, seed)
    key = KeyMaterial(key.bits, offset)
    enc, after = otp_xor(msg, key)
    dec, _ = otp_xor(enc, key)
    assert dec == msg
    assert after.consumed == offset + 8 * len(msg)


def test_image_sized_message():
    msg = bytes(24192 // 8)
    _, key = otp_xor(msg, generate_key(24192, 1))
    assert key.consumed == 24192 and key.remaining == 0
    with pytest.raises(InsufficientKeyError) as info:
        otp_xor(msg, generate_key(24191, 1))
    assert (info.value.required_bits, info.value.available_bits) == (24192, 24191)


def test_no_reuse_through_interface():
    key = generate_key(64, 3)
    _, key = otp_xor(b"abcd", key)
    assert key.consumed == 32
    _, key = otp_xor(b"efgh", key)
    assert key.consumed == 64
    with pytest.raises(InsufficientKeyError):
        otp_xor(b"i", key)


def test_key_is_immutable():
    key = generate_key(16, 0)
    with pytest.raises(ValueError):
        key.bits[0] = 1


def test_key_file_format():
    key = KeyMaterial(np.array([1, 0, 1, 1, 0, 0, 0, 1, 1, 1], np.uint8), consumed=3)
    raw = dump_key(key)
    assert raw[:4] == b"OTPK"
    assert raw[4] == 1
    assert int.from_bytes(raw[5:13], "big") == 10
    assert int.from_bytes(raw[13:21], "big") == 3
    assert raw[21:] == bytes([0b10110001, 0b11000000])
    back = load_key(raw)
    assert np.array_equal(back.bits, key.bits) and back.consumed == 3


@pytest.mark.parametrize("raw", [b"", b"XXXX" + bytes(17), dump_key(generate_key(16, 0))[:-1]])
def test_bad_key_files(raw):
    with pytest.raises(KeyFileError):
        load_key(raw)


def test_file_round_trip_persists_offset(tmp_path):
    key_path = tmp_path / "key.otp"
    write_key_file(key_path, generate_key(8 * 100, 5))
    write_key_file(tmp_path / "copy.otp", read_key_file(key_path))
    plain = tmp_path / "msg.bin"
    plain.write_bytes(b"decoy states" * 4)
    enc = tmp_path / "msg.enc"
    assert xor_file(key_path, plain, enc) == 8 * 48
    assert read_key_file(key_path).consumed == 8 * 48
    dec = tmp_path / "msg.dec"
    xor_file(tmp_path / "copy.otp", enc, dec)
    assert dec.read_bytes() == plain.read_bytes()
