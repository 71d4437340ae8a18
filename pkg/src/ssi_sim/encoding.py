"""Hashing and canonical encodings shared by every module."""

from __future__ import annotations

import base64
import hashlib
import json
from typing import Any

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)


def H(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _field_bytes(value: Any) -> bytes:
    if isinstance(value, bytes):
        return value
    if isinstance(value, str):
        return value.encode("utf-8")
    if isinstance(value, bool):
        return b"\x01" if value else b"\x00"
    if isinstance(value, int):
        if value < 0:
            raise ValueError("negative integers are not encodable")
        return value.to_bytes(8, "big")
    raise TypeError(f"cannot encode field of type {type(value).__name__}")


def encode_fields(*fields: Any) -> bytes:
    """Length-prefixed concatenation: each field as u32 length followed by its bytes.

    Integers are encoded as 8-byte big-endian, strings as UTF-8.
    """
    out = bytearray()
    for f in fields:
        b = _field_bytes(f)
        out += len(b).to_bytes(4, "big")
        out += b
    return bytes(out)


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def from_hex(value: str, size: int | None = None) -> bytes:
    """Strict lowercase-hex decode; rejects uppercase so every byte string has one spelling."""
    if not isinstance(value, str) or value != value.lower():
        raise ValueError("expected lowercase hex")
    raw = bytes.fromhex(value)
    if raw.hex() != value:
        raise ValueError("non-canonical hex")
    if size is not None and len(raw) != size:
        raise ValueError(f"expected {size} bytes, got {len(raw)}")
    return raw


def b32(data: bytes) -> str:
    return base64.b32encode(data).decode("ascii").rstrip("=").lower()
