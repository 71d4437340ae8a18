"""Master/sub key hierarchy and hot/cold wallets.

Signatures are Ed25519 (deterministic, 32-byte public keys).  A sub-key's seed is
``H(master_seed || label)``; only the wallet keeps the link back to the master.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .encoding import H
from .errors import (
    BadSeedLength,
    ColdWalletOffline,
    EmptyLabel,
    KeyMissing,
    KeyNotActive,
    MasterInactive,
    NotAMaster,
    MasterKeyPolicy,
    NotAColdWallet,
)

SEED_SIZE = 32

# Master keys are kept for controlling sub-keys; anything else must use a sub-key.
MASTER_PURPOSES = frozenset({"registry-update", "recovery"})


class KeyState(str, Enum):
    GENERATED = "Generated"
    ACTIVE = "Active"
    LOST = "Lost"
    COMPROMISED = "Compromised"
    REVOKED = "Revoked"
    RECOVERED = "Recovered"


SIGNING_STATES = frozenset({KeyState.ACTIVE, KeyState.RECOVERED})


class WalletKind(str, Enum):
    HOT = "hot"
    COLD = "cold"


@functools.lru_cache(maxsize=4096)
def _private(seed: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(seed)


def public_from_seed(seed: bytes) -> bytes:
    return _private(seed).public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def raw_sign(seed: bytes, message: bytes) -> bytes:
    return _private(seed).sign(message)


def verify(public: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


@dataclass(frozen=True)
class MasterKey:
    seed: bytes = field(repr=False)
    public: bytes
    state: KeyState = KeyState.GENERATED

    @property
    def fingerprint(self) -> bytes:
        return H(self.public)


@dataclass(frozen=True)
class SubKey:
    label: str
    seed: bytes = field(repr=False)
    public: bytes
    parent_fingerprint: bytes
    state: KeyState = KeyState.ACTIVE


Key = Union[MasterKey, SubKey]


def generate_master(seed: bytes) -> MasterKey:
    if len(seed) != SEED_SIZE:
        raise BadSeedLength(f"master seed must be {SEED_SIZE} bytes, got {len(seed)}")
    key = MasterKey(seed=bytes(seed), public=public_from_seed(seed))
    return replace(key, state=KeyState.ACTIVE)


def derive_subkey(master: MasterKey, label: str) -> SubKey:
    if not isinstance(master, MasterKey):
        raise NotAMaster("sub-keys cannot derive children; the hierarchy is two-level")
    if master.state not in SIGNING_STATES:
        raise MasterInactive(f"master key is {master.state.value}")
    if not label:
        raise EmptyLabel("sub-key label must be non-empty")
    child = H(master.seed + label.encode("utf-8"))
    return SubKey(
        label=label,
        seed=child,
        public=public_from_seed(child),
        parent_fingerprint=master.fingerprint,
    )


def key_from_seed(seed: bytes, label: str = "restored") -> SubKey:
    """Wrap a bare 32-byte secret (e.g. one rebuilt from shards) as a standalone key."""
    if len(seed) != SEED_SIZE:
        raise BadSeedLength(f"seed must be {SEED_SIZE} bytes, got {len(seed)}")
    return SubKey(label=label, seed=bytes(seed), public=public_from_seed(seed), parent_fingerprint=b"")


@dataclass
class Wallet:
    name: str
    kind: WalletKind = WalletKind.HOT
    connected: bool = True
    entries: dict[str, Key] = field(default_factory=dict)
    signatures_made: int = 0

    def __post_init__(self) -> None:
        self.kind = WalletKind(self.kind)
        if self.kind is WalletKind.HOT:
            self.connected = True

    def add(self, ref: str, key: Key) -> None:
        self.entries[ref] = key

    def get(self, ref: str) -> Key:
        try:
            return self.entries[ref]
        except KeyError:
            raise KeyMissing(f"wallet {self.name!r} has no key {ref!r}") from None

    def public(self, ref: str) -> bytes:
        return self.get(ref).public

    def set_state(self, ref: str, state: KeyState) -> Key:
        key = replace(self.get(ref), state=KeyState(state))
        self.entries[ref] = key
        return key

    def find_public(self, public: bytes) -> str | None:
        for ref, key in self.entries.items():
            if key.public == public:
                return ref
        return None

    def children_of(self, master_ref: str) -> list[str]:
        fp = self.get(master_ref).fingerprint
        return [r for r, k in self.entries.items() if isinstance(k, SubKey) and k.parent_fingerprint == fp]


def create_wallet(name: str, kind: WalletKind | str = WalletKind.HOT) -> Wallet:
    kind = WalletKind(kind)
    return Wallet(name=name, kind=kind, connected=kind is WalletKind.HOT)


def connect_cold(wallet: Wallet) -> Wallet:
    if wallet.kind is not WalletKind.COLD:
        raise NotAColdWallet(f"wallet {wallet.name!r} is {wallet.kind.value}")
    wallet.connected = True
    return wallet


def disconnect_cold(wallet: Wallet) -> Wallet:
    if wallet.kind is not WalletKind.COLD:
        raise NotAColdWallet(f"wallet {wallet.name!r} is {wallet.kind.value}")
    wallet.connected = False
    return wallet


def sign(wallet: Wallet, key_ref: str, message: bytes, *, purpose: str = "transaction") -> bytes:
    if not wallet.connected:
        raise ColdWalletOffline(f"cold wallet {wallet.name!r} is offline")
    key = wallet.get(key_ref)
    if key.state not in SIGNING_STATES:
        raise KeyNotActive(f"key {key_ref!r} is {key.state.value}")
    if isinstance(key, MasterKey) and purpose not in MASTER_PURPOSES:
        raise MasterKeyPolicy(f"master key may not sign for purpose {purpose!r}")
    wallet.signatures_made += 1
    return raw_sign(key.seed, message)


def revoke_subkey(wallet: Wallet, master_ref: str, sub_ref: str) -> bytes:
    """Revoke a lost or compromised sub-key under master authority.

    Returns the master's signature over the revocation statement.
    """
    sub = wallet.get(sub_ref)
    master = wallet.get(master_ref)
    if not isinstance(master, MasterKey) or not isinstance(sub, SubKey):
        raise KeyMissing("revoke_subkey needs a master reference and one of its sub-keys")
    if sub.parent_fingerprint != master.fingerprint:
        raise KeyMissing(f"{sub_ref!r} was not derived from {master_ref!r}")
    sig = sign(wallet, master_ref, b"revoke-subkey" + sub.public, purpose="registry-update")
    wallet.set_state(sub_ref, KeyState.REVOKED)
    return sig
