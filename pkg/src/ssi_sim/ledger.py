"""Deterministic in-process append-only ledger.

Transactions carry a typed payload (``payload["op"]``) that is folded into a
materialized state view by operation handlers.  Handlers follow a
validate-then-mutate convention: they raise an :class:`SsiError` before touching
``state`` when the operation is not allowed.

Every submission is dry-run against the *pending* view (committed state plus the
pool, packed into future blocks exactly as :meth:`Ledger.produce_block` will pack
them), so contract errors surface at submit time and included transactions
apply cleanly.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping

from . import keyring
from .encoding import H, ZERO_DIGEST, canonical_json, encode_fields, from_hex
from .errors import BadSignature, BadTransaction, SsiError, StaleNonce, UnknownOperation

DEFAULT_BLOCK_CAPACITY = 64

Handler = Callable[[dict, "Transaction", int], None]


def tx_signing_bytes(sender: bytes, nonce: int, payload: Mapping[str, Any]) -> bytes:
    return encode_fields("ssi-sim/tx", sender, nonce, canonical_json(payload))


def _tx_digest(sender: bytes, nonce: int, payload: Mapping[str, Any], signature: bytes) -> bytes:
    return H(encode_fields(sender, nonce, canonical_json(payload), signature))


@dataclass(frozen=True)
class Transaction:
    sender: bytes
    nonce: int
    payload: dict
    signature: bytes
    tx_id: bytes

    @property
    def op(self) -> str:
        return str(self.payload.get("op", ""))

    def computed_id(self) -> bytes:
        return _tx_digest(self.sender, self.nonce, self.payload, self.signature)

    def signature_valid(self) -> bool:
        return keyring.verify(self.sender, tx_signing_bytes(self.sender, self.nonce, self.payload), self.signature)

    def to_json(self) -> dict:
        return {
            "tx_id": self.tx_id.hex(),
            "sender": self.sender.hex(),
            "nonce": self.nonce,
            "payload": self.payload,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> Transaction:
        return cls(
            sender=from_hex(data["sender"], 32),
            nonce=int(data["nonce"]),
            payload=copy.deepcopy(dict(data["payload"])),
            signature=from_hex(data["signature"]),
            tx_id=from_hex(data["tx_id"], 32),
        )


def make_tx(sender: bytes, nonce: int, payload: Mapping[str, Any], signer: Callable[[bytes], bytes]) -> Transaction:
    payload = copy.deepcopy(dict(payload))
    sig = signer(tx_signing_bytes(sender, nonce, payload))
    return Transaction(sender, nonce, payload, sig, _tx_digest(sender, nonce, payload, sig))


def block_digest(height: int, prev_hash: bytes, tx_ids: Iterable[bytes]) -> bytes:
    return H(encode_fields(height, prev_hash, *tx_ids))


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    txs: tuple[Transaction, ...]
    block_hash: bytes

    @classmethod
    def seal(cls, height: int, prev_hash: bytes, txs: Iterable[Transaction]) -> Block:
        txs = tuple(txs)
        return cls(height, prev_hash, txs, block_digest(height, prev_hash, (t.tx_id for t in txs)))

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "block_hash": self.block_hash.hex(),
            "txs": [t.to_json() for t in self.txs],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> Block:
        return cls(
            height=int(data["height"]),
            prev_hash=from_hex(data["prev_hash"], 32),
            txs=tuple(Transaction.from_json(t) for t in data["txs"]),
            block_hash=from_hex(data["block_hash"], 32),
        )


GENESIS = Block.seal(0, ZERO_DIGEST, ())


@dataclass
class ChainReport:
    ok: bool
    failed_height: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class Receipt:
    height: int
    index: int
    ok: bool
    error: str | None = None


def _note(state: dict, tx: Transaction, height: int) -> None:
    state.setdefault("notes", 0)
    state["notes"] += 1


BUILTIN_HANDLERS: dict[str, Handler] = {"ledger.note": _note}


class Ledger:
    def __init__(self, block_capacity: int = DEFAULT_BLOCK_CAPACITY, handlers: Mapping[str, Handler] | None = None):
        if block_capacity < 1:
            raise ValueError("block_capacity must be positive")
        self.block_capacity = block_capacity
        self.handlers: dict[str, Handler] = dict(BUILTIN_HANDLERS)
        self.handlers.update(handlers or {})
        self.blocks: list[Block] = [GENESIS]
        self.pool: list[Transaction] = []
        self.state: dict = {}
        self.receipts: dict[bytes, Receipt] = {}
        self._last_nonce: dict[bytes, int] = {}
        self._pending: dict | None = None

    # -- clock -------------------------------------------------------------

    def current_height(self) -> int:
        return self.blocks[-1].height

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    # -- submission ----------------------------------------------------------

    def next_nonce(self, sender: bytes) -> int:
        return self._last_nonce.get(sender, -1) + 1

    def _apply(self, state: dict, tx: Transaction, height: int) -> None:
        handler = self.handlers.get(tx.op)
        if handler is None:
            raise UnknownOperation(f"no handler for operation {tx.op!r}")
        handler(state, tx, height)

    def pending_state(self) -> dict:
        """State as it will look once every pooled transaction is included."""
        if self._pending is None:
            view = copy.deepcopy(self.state)
            base = self.current_height() + 1
            for i, tx in enumerate(self.pool):
                self._apply(view, tx, base + i // self.block_capacity)
            self._pending = view
        return self._pending

    def pending_height(self) -> int:
        """Height of the block the next submitted transaction will land in."""
        return self.current_height() + 1 + len(self.pool) // self.block_capacity

    def submit_tx(self, tx: Transaction) -> bytes:
        if tx.computed_id() != tx.tx_id:
            raise BadTransaction("tx_id does not match transaction contents")
        if not tx.signature_valid():
            raise BadSignature("transaction signature does not verify under sender key")
        last = self._last_nonce.get(tx.sender, -1)
        if tx.nonce <= last:
            raise StaleNonce(f"nonce {tx.nonce} <= last seen {last}")
        if tx.op not in self.handlers:
            raise UnknownOperation(f"no handler for operation {tx.op!r}")
        view = self.pending_state()
        try:
            self._apply(view, tx, self.pending_height())
        except Exception:
            self._pending = None
            raise
        self._last_nonce[tx.sender] = tx.nonce
        self.pool.append(tx)
        return tx.tx_id

    def submit(self, wallet: keyring.Wallet, key_ref: str, payload: Mapping[str, Any]) -> bytes:
        """Build, sign and submit a transaction from a wallet key."""
        sender = wallet.public(key_ref)
        tx = make_tx(
            sender,
            self.next_nonce(sender),
            payload,
            lambda msg: keyring.sign(wallet, key_ref, msg),
        )
        return self.submit_tx(tx)

    # -- blocks --------------------------------------------------------------

    def produce_block(self) -> Block:
        take, self.pool = self.pool[: self.block_capacity], self.pool[self.block_capacity :]
        height = self.current_height() + 1
        block = Block.seal(height, self.head.block_hash, take)
        for i, tx in enumerate(take):
            try:
                self._apply(self.state, tx, height)
            except SsiError as exc:
                self.receipts[tx.tx_id] = Receipt(height, i, False, exc.code)
            else:
                self.receipts[tx.tx_id] = Receipt(height, i, True)
        self.blocks.append(block)
        self._pending = None
        return block

    def produce_until_empty(self) -> list[Block]:
        out = [self.produce_block()]
        while self.pool:
            out.append(self.produce_block())
        return out

    def find_tx(self, tx_id: bytes) -> Transaction | None:
        r = self.receipts.get(tx_id)
        if r is None:
            return None
        return self.blocks[r.height].txs[r.index]

    def transactions(self) -> Iterable[Transaction]:
        for b in self.blocks:
            yield from b.txs

    # -- verification --------------------------------------------------------

    def verify_chain(self) -> ChainReport:
        return verify_chain(self)

    # -- persistence ---------------------------------------------------------

    def dump(self) -> dict:
        return {
            "block_capacity": self.block_capacity,
            "blocks": [b.to_json() for b in self.blocks],
            "pool": [t.to_json() for t in self.pool],
        }

    def dumps(self) -> bytes:
        return canonical_json(self.dump())

    @classmethod
    def load(cls, data: Mapping[str, Any], handlers: Mapping[str, Handler] | None = None) -> Ledger:
        """Rebuild a ledger by replaying the dumped chain; the state view is re-folded."""
        ledger = cls(int(data["block_capacity"]), handlers)
        blocks = [Block.from_json(b) for b in data["blocks"]]
        if not blocks or blocks[0] != GENESIS:
            raise BadTransaction("dump does not start at genesis")
        for block in blocks[1:]:
            for tx in block.txs:
                ledger.pool.append(tx)
                ledger._last_nonce[tx.sender] = max(ledger._last_nonce.get(tx.sender, -1), tx.nonce)
            # keep each block's tx set as dumped even if capacity changed
            saved, ledger.block_capacity = ledger.block_capacity, max(len(block.txs), 1)
            ledger.produce_block()
            ledger.block_capacity = saved
            if ledger.head.block_hash != block.block_hash:
                raise BadTransaction(f"block {block.height} hash mismatch on replay")
        for t in data.get("pool", []):
            ledger.submit_tx(Transaction.from_json(t))
        return ledger


def verify_chain(ledger: Ledger) -> ChainReport:
    blocks = ledger.blocks
    if not blocks:
        return ChainReport(False, None, "empty chain")
    g = blocks[0]
    if g.height != 0 or g.prev_hash != ZERO_DIGEST or g.txs:
        return ChainReport(False, 0, "malformed genesis")
    nonces: dict[bytes, int] = {}
    prev = None
    for i, b in enumerate(blocks):
        if b.height != i:
            return ChainReport(False, i, f"height {b.height} at position {i}")
        if prev is not None and b.prev_hash != prev.block_hash:
            return ChainReport(False, i, "prev_hash does not link to predecessor")
        if len(b.txs) > ledger.block_capacity:
            return ChainReport(False, i, "block exceeds capacity")
        for tx in b.txs:
            if tx.computed_id() != tx.tx_id:
                return ChainReport(False, i, f"tx {tx.tx_id.hex()[:12]} contents do not match its id")
            if not tx.signature_valid():
                return ChainReport(False, i, f"tx {tx.tx_id.hex()[:12]} signature invalid")
            if tx.nonce <= nonces.get(tx.sender, -1):
                return ChainReport(False, i, f"tx {tx.tx_id.hex()[:12]} nonce not increasing")
            nonces[tx.sender] = tx.nonce
        if block_digest(b.height, b.prev_hash, (t.tx_id for t in b.txs)) != b.block_hash:
            return ChainReport(False, i, "block hash mismatch")
        prev = b
    return ChainReport(True)
