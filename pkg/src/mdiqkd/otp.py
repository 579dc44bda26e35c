"""One-time-pad encryption with consumable key files.

Key file layout (all integers big-endian)::

    magic    4 bytes   b"OTPK"
    version  1 byte    1
    nbits    8 bytes   number of key bits
    offset   8 bytes   bits already consumed
    payload  ceil(nbits / 8) bytes, bits packed MSB first

Encryption and decryption are the same XOR; both consume key bits starting at
the stored offset and never wrap around.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

MAGIC = b"OTPK"
VERSION = 1
_HEADER = struct.Struct(">4sBQQ")


class KeyFileError(ValueError):
    pass


class InsufficientKeyError(RuntimeError):
    def __init__(self, required_bits: int, available_bits: int):
        self.required_bits = required_bits
        self.available_bits = available_bits
        super().__init__(f"insufficient key: need {required_bits} bits, "
                         f"{available_bits} available")


@dataclass(frozen=True)
class KeyMaterial:
    bits: np.ndarray  # uint8 0/1, read-only
    consumed: int = 0

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or np.any(bits > 1):
            raise KeyFileError("key bits must be a flat sequence of 0/1")
        if not 0 <= self.consumed <= len(bits):
            raise KeyFileError(f"consumed offset {self.consumed} outside [0, {len(bits)}]")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def remaining(self) -> int:
        return len(self.bits) - self.consumed

    @classmethod
    def from_bytes(cls, data: bytes, nbits: int | None = None) -> KeyMaterial:
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        return cls(bits if nbits is None else bits[:nbits])


def otp_xor(message: bytes, key: KeyMaterial) -> tuple[bytes, KeyMaterial]:
    """XOR ``message`` with the next ``8 * len(message)`` unused key bits.

    Returns the output bytes and the key with its offset advanced.
    """
    need = 8 * len(message)
    if need > key.remaining:
        raise InsufficientKeyError(need, key.remaining)
    pad = np.packbits(key.bits[key.consumed:key.consumed + need])
    out = np.bitwise_xor(np.frombuffer(message, dtype=np.uint8), pad)
    return out.tobytes(), replace(key, consumed=key.consumed + need)


def dump_key(key: KeyMaterial) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, len(key.bits), key.consumed)
    return header + np.packbits(key.bits).tobytes()


def load_key(data: bytes) -> KeyMaterial:
    if len(data) < _HEADER.size:
        raise KeyFileError("key file too short for header")
    magic, version, nbits, consumed = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise KeyFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise KeyFileError(f"unsupported key file version {version}")
    payload = data[_HEADER.size:]
    if len(payload) != (nbits + 7) // 8:
        raise KeyFileError(f"payload has {len(payload)} bytes, header says {nbits} bits")
    return KeyMaterial(np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[:nbits], consumed)


def read_key_file(path: str | Path) -> KeyMaterial:
    return load_key(Path(path).read_bytes())


def write_key_file(path: str | Path, key: KeyMaterial) -> None:
    Path(path).write_bytes(dump_key(key))


def generate_key(nbits: int, seed: int) -> KeyMaterial:
    """Seeded demonstration key; stands in for a distilled QKD key."""
    rng = np.random.default_rng(seed)
    return KeyMaterial(rng.integers(0, 2, size=nbits, dtype=np.uint8))


def xor_file(key_path: str | Path, in_path: str | Path, out_path: str | Path) -> int:
    """Encrypt or decrypt a file and persist the advanced key offset.

    Returns the number of key bits consumed.
    """
    key = read_key_file(key_path)
    message = Path(in_path).read_bytes()
    out, updated = otp_xor(message, key)
    Path(out_path).write_bytes(out)
    write_key_file(key_path, updated)
    return updated.consumed - key.consumed
