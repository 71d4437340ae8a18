from __future__ import annotations

import random
from dataclasses import dataclass

import pytest

from ssi_sim import keyring
from ssi_sim.keyring import Wallet
from ssi_sim.world import World


@dataclass
class Party:
    wallet: Wallet
    ref: str
    did: str

    @property
    def public(self) -> bytes:
        return self.wallet.public(self.ref)


def make_party(world: World, name: str, label: str = "id", *, produce: bool = True) -> Party:
    wallet = world.wallets.setdefault(name, keyring.create_wallet(name))
    if "master" not in wallet.entries:
        wallet.add("master", keyring.generate_master(world.rng.randbytes(32)))
    wallet.add(label, keyring.derive_subkey(wallet.get("master"), label))
    did = world.registry.register(wallet, label, salt=world.rng.randbytes(16))
    if produce:
        world.ledger.produce_block()
    return Party(wallet, label, did)


@pytest.fixture
def world() -> World:
    return World(1234)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(99)


@pytest.fixture
def party(world):
    def factory(name: str, label: str = "id", *, produce: bool = True) -> Party:
        return make_party(world, name, label, produce=produce)

    return factory
