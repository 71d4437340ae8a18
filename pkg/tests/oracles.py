"""Independent reference implementations used to cross-check the library.

They deliberately avoid sharing code with ``ssi_sim``: GF(2^8) arithmetic is
done by shift-and-add rather than log tables, Merkle roots by plain recursion.
"""

from __future__ import annotations

import hashlib


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def gf_mul_slow(a: int, b: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        if a & 0x100:
            a ^= 0x11B
        b >>= 1
    return r


def gf_inv_slow(a: int) -> int:
    for c in range(1, 256):
        if gf_mul_slow(a, c) == 1:
            return c
    raise ZeroDivisionError


def lagrange_at_zero_slow(points: list[tuple[int, int]]) -> int:
    total = 0
    for j, (xj, yj) in enumerate(points):
        num = den = 1
        for m, (xm, _) in enumerate(points):
            if m != j:
                num = gf_mul_slow(num, xm)
                den = gf_mul_slow(den, xm ^ xj)
        total ^= gf_mul_slow(yj, gf_mul_slow(num, gf_inv_slow(den)))
    return total


def merkle_root_naive(leaves: list[bytes]) -> bytes:
    """Pair nodes level by level, promoting an odd last node unchanged."""
    nodes = [sha256(b"\x00" + leaf) for leaf in leaves]

    def reduce(level: list[bytes]) -> bytes:
        if len(level) == 1:
            return level[0]
        nxt = [sha256(b"\x01" + level[i] + level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        return reduce(nxt)

    return reduce(nodes)


def window_truth(created_at: int, expires_at: int, now: int) -> str:
    """Expected outcome of one access to a fresh TimeWindow link."""
    if expires_at <= created_at:
        return "ExpiryInPast"
    if now < created_at:
        return "ClockSkew"
    return "Success" if now < expires_at else "Expired"


def recovery_truth(threshold: int, approvals: int, delta: int, timelock: int) -> str:
    if approvals < threshold:
        return "QuorumNotMet"
    if delta < timelock:
        return "TimelockActive"
    return "ok"
