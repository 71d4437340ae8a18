"""Threshold key shards: Shamir secret sharing over GF(2^8), one polynomial per secret byte."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .encoding import DIGEST_SIZE, H
from .errors import BadShard, BadThreshold, DigestMismatch, MixedSplits, NotEnoughShards

MAX_SHARES = 255

# log/antilog tables for GF(2^8) with the AES polynomial x^8+x^4+x^3+x+1 and generator 3
_EXP = [0] * 512
_LOG = [0] * 256


def _build_tables() -> None:
    x = 1
    for i in range(255):
        _EXP[i] = x
        _LOG[x] = i
        x ^= (x << 1) ^ (0x11B if x & 0x80 else 0)
        x &= 0xFF
    for i in range(255, 512):
        _EXP[i] = _EXP[i - 255]


_build_tables()


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def gf_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(256)")
    if a == 0:
        return 0
    return _EXP[(_LOG[a] - _LOG[b]) % 255]


def eval_poly(coeffs: list[int], x: int) -> int:
    """Horner evaluation; coeffs[0] is the constant term."""
    acc = 0
    for c in reversed(coeffs):
        acc = gf_mul(acc, x) ^ c
    return acc


def interpolate_at_zero(points: list[tuple[int, int]]) -> int:
    total = 0
    for i, (xi, yi) in enumerate(points):
        num, den = 1, 1
        for j, (xj, _) in enumerate(points):
            if i != j:
                num = gf_mul(num, xj)
                den = gf_mul(den, xi ^ xj)
        total ^= gf_mul(yi, gf_div(num, den))
    return total


@dataclass(frozen=True)
class KeyShard:
    index: int
    threshold: int
    payload: bytes
    secret_digest: bytes

    def to_bytes(self) -> bytes:
        return bytes([self.index, self.threshold]) + self.payload + self.secret_digest

    @classmethod
    def from_bytes(cls, raw: bytes) -> KeyShard:
        if len(raw) < 2 + 1 + DIGEST_SIZE:
            raise BadShard(f"shard too short ({len(raw)} bytes)")
        index, threshold = raw[0], raw[1]
        if index == 0 or threshold == 0:
            raise BadShard("shard index and threshold must be non-zero")
        return cls(index, threshold, raw[2:-DIGEST_SIZE], raw[-DIGEST_SIZE:])

    def to_hex(self) -> str:
        return self.to_bytes().hex()


def split_key(secret: bytes, t: int, n: int, rng: random.Random) -> list[KeyShard]:
    if not (1 <= t <= n <= MAX_SHARES):
        raise BadThreshold(f"need 1 <= t <= n <= {MAX_SHARES}, got t={t}, n={n}")
    if not secret:
        raise BadThreshold("secret must be non-empty")
    digest = H(secret)
    polys = []
    for byte in secret:
        polys.append([byte] + list(rng.randbytes(t - 1)))
    return [
        KeyShard(x, t, bytes(eval_poly(p, x) for p in polys), digest)
        for x in range(1, n + 1)
    ]


def reconstruct_key(shards: list[KeyShard]) -> bytes:
    if not shards:
        raise NotEnoughShards("no shards supplied")
    first = shards[0]
    for s in shards[1:]:
        if (s.secret_digest, s.threshold, len(s.payload)) != (first.secret_digest, first.threshold, len(first.payload)):
            raise MixedSplits("shards come from different splits")
    by_index: dict[int, KeyShard] = {}
    for s in shards:
        if s.index in by_index and by_index[s.index].payload != s.payload:
            raise DigestMismatch(f"conflicting payloads for shard index {s.index}")
        by_index[s.index] = s
    if len(by_index) < first.threshold:
        raise NotEnoughShards(f"need {first.threshold} distinct shards, got {len(by_index)}")
    chosen = list(by_index.values())
    secret = bytes(
        interpolate_at_zero([(s.index, s.payload[pos]) for s in chosen])
        for pos in range(len(first.payload))
    )
    if H(secret) != first.secret_digest:
        raise DigestMismatch("reconstructed secret does not match the shard digest")
    return secret


def export_shards(shards: list[KeyShard]) -> str:
    return "".join(s.to_hex() + "\n" for s in shards)


def import_shards(text: str) -> list[KeyShard]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            raw = bytes.fromhex(line)
        except ValueError as exc:
            raise BadShard(f"shard line is not hex: {exc}") from None
        out.append(KeyShard.from_bytes(raw))
    return out
