"""Canonical byte encodings.

Every value that is hashed or signed goes through this module first. A
composite value is one tag byte followed by its fields, each prefixed with a
4-byte big-endian length. Integers are written fixed-width, big-endian.
"""

from __future__ import annotations

import hashlib
import struct

HASH_NAME = "sha256"

_LEN = struct.Struct(">I")


class DecodeError(ValueError):
    """Raised when bytes do not parse as the expected canonical value."""


def hash_bytes(data: bytes) -> bytes:
    return hashlib.new(HASH_NAME, data).digest()


def int_to_bytes(value: int, width: int) -> bytes:
    if value < 0:
        raise ValueError("negative integers have no canonical encoding")
    return value.to_bytes(width, "big")


def field(data: bytes) -> bytes:
    return _LEN.pack(len(data)) + data


def frame(tag: int, *fields: bytes) -> bytes:
    """Encode ``fields`` in order under a one-byte ``tag``."""
    if not 0 <= tag <= 0xFF:
        raise ValueError(f"tag out of range: {tag}")
    return bytes([tag]) + b"".join(field(f) for f in fields)


def unframe(data: bytes, tag: int | None = None) -> tuple[int, list[bytes]]:
    """Split a framed value back into ``(tag, fields)``.

    Trailing garbage or truncated length prefixes raise :class:`DecodeError`.
    """
    if not data:
        raise DecodeError("empty input")
    got = data[0]
    if tag is not None and got != tag:
        raise DecodeError(f"expected tag 0x{tag:02x}, got 0x{got:02x}")
    fields = []
    pos = 1
    while pos < len(data):
        if pos + 4 > len(data):
            raise DecodeError("truncated length prefix")
        (n,) = _LEN.unpack_from(data, pos)
        pos += 4
        if pos + n > len(data):
            raise DecodeError("truncated field")
        fields.append(data[pos : pos + n])
        pos += n
    return got, fields


def expect_fields(fields: list[bytes], count: int) -> list[bytes]:
    if len(fields) != count:
        raise DecodeError(f"expected {count} fields, got {len(fields)}")
    return fields
