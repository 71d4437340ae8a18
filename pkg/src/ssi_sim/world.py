"""Everything one simulation owns: ledger, stores, wallets, services and the seeded PRNG.

All randomness (key seeds, salts, nonces, link tokens, shard coefficients,
encryption keys) is drawn from ``World.rng`` so a run is a pure function of its seed.
"""

from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Any

from . import anchor, credentials, registry
from .anchor import AnchorReceipt, AnchorService
from .credentials import Credential, HeldCredential, Presentation
from .errors import KeyMissing
from .keyring import KeyState, MasterKey, SubKey, Wallet, WalletKind, public_from_seed
from .ledger import DEFAULT_BLOCK_CAPACITY, Ledger
from .registry import ContentStore, Registry, SocialStore
from .share_links import ShareService

HANDLERS = {**registry.HANDLERS, **credentials.HANDLERS, **anchor.HANDLERS}

STATE_FILE = "world.json"


def new_ledger(block_capacity: int = DEFAULT_BLOCK_CAPACITY) -> Ledger:
    return Ledger(block_capacity, HANDLERS)


def wallet_to_json(w: Wallet) -> dict:
    entries = {}
    for ref, k in w.entries.items():
        if isinstance(k, MasterKey):
            entries[ref] = {"type": "master", "seed": k.seed.hex(), "state": k.state.value}
        else:
            entries[ref] = {
                "type": "sub",
                "label": k.label,
                "seed": k.seed.hex(),
                "parent": k.parent_fingerprint.hex(),
                "state": k.state.value,
            }
    return {"name": w.name, "kind": w.kind.value, "connected": w.connected, "entries": entries}


def wallet_from_json(data: dict) -> Wallet:
    w = Wallet(name=data["name"], kind=WalletKind(data["kind"]), connected=data["connected"])
    for ref, e in data["entries"].items():
        seed = bytes.fromhex(e["seed"])
        if e["type"] == "master":
            w.entries[ref] = MasterKey(seed, public_from_seed(seed), KeyState(e["state"]))
        else:
            w.entries[ref] = SubKey(e["label"], seed, public_from_seed(seed), bytes.fromhex(e["parent"]), KeyState(e["state"]))
    return w


def _rng_state_to_json(rng: random.Random) -> list:
    version, internal, gauss = rng.getstate()
    return [version, list(internal), gauss]


def _rng_from_json(data: list) -> random.Random:
    rng = random.Random()
    rng.setstate((data[0], tuple(data[1]), data[2]))
    return rng


class World:
    def __init__(self, seed: int = 0, *, block_capacity: int = DEFAULT_BLOCK_CAPACITY, social_root: Path | None = None):
        self.seed = seed
        self.rng = random.Random(seed)
        self.ledger = new_ledger(block_capacity)
        self.store = ContentStore()
        self.social = SocialStore(social_root)
        self.registry = Registry(self.ledger, self.store)
        self.wallets: dict[str, Wallet] = {}
        self.shares = self._make_shares()
        self.anchors = AnchorService()
        self.held: dict[str, HeldCredential] = {}
        self.issued: dict[str, dict[str, Credential]] = {}
        self.presentations: dict[str, Presentation] = {}
        self.receipts: dict[str, AnchorReceipt] = {}

    def _make_shares(self, data: dict | None = None) -> ShareService:
        kwargs: dict[str, Any] = {"clock": self.ledger.current_height, "holder_key": self.registry.controller}
        if data is None:
            return ShareService(self.rng, **kwargs)
        return ShareService.from_json(data, self.rng, **kwargs)

    def wallet(self, name: str) -> Wallet:
        try:
            return self.wallets[name]
        except KeyError:
            raise KeyMissing(f"no wallet named {name!r}") from None

    def record_issued(self, held: HeldCredential | list[HeldCredential]) -> list[HeldCredential]:
        items = held if isinstance(held, list) else [held]
        for h in items:
            c = h.credential
            self.held[c.cred_id] = h
            self.issued.setdefault(c.issuer_did, {})[c.cred_id] = c
        return items

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "rng": _rng_state_to_json(self.rng),
            "ledger": self.ledger.dump(),
            "store": self.store.to_json(),
            "wallets": {n: wallet_to_json(w) for n, w in sorted(self.wallets.items())},
            "shares": self.shares.to_json(),
            "anchors": {"batch_limit": self.anchors.batch_limit, "pending": [d.hex() for d in self.anchors.pending]},
            "held": {k: v.to_json() for k, v in sorted(self.held.items())},
            "issued": {i: sorted(c) for i, c in sorted(self.issued.items())},
            "presentations": {k: p.to_json() for k, p in sorted(self.presentations.items())},
            "receipts": {k: r.to_json() for k, r in sorted(self.receipts.items())},
        }

    def save(self, directory: Path | str) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / STATE_FILE
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_json(), sort_keys=True, indent=1))
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, directory: Path | str) -> World:
        directory = Path(directory)
        data = json.loads((directory / STATE_FILE).read_text())
        world = cls(data["seed"], social_root=directory / "social")
        world.rng = _rng_from_json(data["rng"])
        world.ledger = Ledger.load(data["ledger"], HANDLERS)
        world.store = ContentStore.from_json(data["store"])
        world.registry = Registry(world.ledger, world.store)
        world.wallets = {n: wallet_from_json(w) for n, w in data["wallets"].items()}
        world.shares = world._make_shares(data["shares"])
        world.anchors = AnchorService(
            batch_limit=data["anchors"]["batch_limit"],
            pending=[bytes.fromhex(d) for d in data["anchors"]["pending"]],
        )
        world.held = {k: HeldCredential.from_json(v) for k, v in data["held"].items()}
        for cid in (c for ids in data["issued"].values() for c in ids):
            h = world.held.get(cid)
            if h is not None:
                world.issued.setdefault(h.credential.issuer_did, {})[cid] = h.credential
        world.presentations = {k: Presentation.from_json(v) for k, v in data["presentations"].items()}
        world.receipts = {k: AnchorReceipt.from_json(v) for k, v in data["receipts"].items()}
        return world

    @classmethod
    def open(cls, directory: Path | str | None, seed: int = 0) -> World:
        if directory is not None and (Path(directory) / STATE_FILE).exists():
            return cls.load(directory)
        return cls(seed, social_root=Path(directory) / "social" if directory is not None else None)
