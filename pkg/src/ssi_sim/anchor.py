"""Merkle batching of off-chain digests with one on-ledger root per batch.

Leaf nodes are ``H(0x00 || digest)`` and interior nodes ``H(0x01 || left || right)``;
an odd node at the end of a level is promoted unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from . import keyring
from .encoding import DIGEST_SIZE, H, from_hex
from .errors import EmptyBatch, IndexOutOfRange
from .ledger import Ledger, Transaction

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"
DEFAULT_BATCH_LIMIT = 1024


def leaf_node(digest: bytes) -> bytes:
    return H(LEAF_PREFIX + digest)


def parent_node(left: bytes, right: bytes) -> bytes:
    return H(NODE_PREFIX + left + right)


@dataclass(frozen=True)
class MerkleTree:
    leaves: tuple[bytes, ...]
    levels: tuple[tuple[bytes, ...], ...]

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    def __len__(self) -> int:
        return len(self.leaves)


def build_tree(leaves: Iterable[bytes]) -> MerkleTree:
    leaves = tuple(bytes(l) for l in leaves)
    if not leaves:
        raise EmptyBatch("cannot build a tree over zero leaves")
    level = tuple(leaf_node(l) for l in leaves)
    levels = [level]
    while len(level) > 1:
        nxt = [parent_node(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = tuple(nxt)
        levels.append(level)
    return MerkleTree(leaves, tuple(levels))


def root(tree: MerkleTree) -> bytes:
    return tree.root


@dataclass(frozen=True)
class Sibling:
    digest: bytes
    side: str  # "L": sibling sits left of the running node; "R": right


@dataclass(frozen=True)
class InclusionProof:
    leaf_index: int
    siblings: tuple[Sibling, ...] = ()


def prove(tree: MerkleTree, index: int) -> InclusionProof:
    if not 0 <= index < len(tree):
        raise IndexOutOfRange(f"index {index} outside 0..{len(tree) - 1}")
    siblings = []
    i = index
    for level in tree.levels[:-1]:
        if i % 2:
            siblings.append(Sibling(level[i - 1], "L"))
        elif i + 1 < len(level):
            siblings.append(Sibling(level[i + 1], "R"))
        i //= 2
    return InclusionProof(index, tuple(siblings))


def verify_proof(leaf: bytes, proof: InclusionProof, expected_root: bytes) -> bool:
    if len(leaf) != DIGEST_SIZE:
        return False
    node = leaf_node(leaf)
    for s in proof.siblings:
        if s.side == "L":
            node = parent_node(s.digest, node)
        elif s.side == "R":
            node = parent_node(node, s.digest)
        else:
            return False
    return node == expected_root


@dataclass(frozen=True)
class AnchorReceipt:
    root: bytes
    tx_id: bytes
    anchored_at: int
    leaf_digest: bytes
    proof: InclusionProof

    def to_json(self) -> dict:
        return {
            "root": self.root.hex(),
            "tx_id": self.tx_id.hex(),
            "anchored_at": self.anchored_at,
            "leaf_digest": self.leaf_digest.hex(),
            "leaf_index": self.proof.leaf_index,
            "siblings": [{"digest": s.digest.hex(), "side": s.side} for s in self.proof.siblings],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> AnchorReceipt:
        return cls(
            root=from_hex(data["root"], DIGEST_SIZE),
            tx_id=from_hex(data["tx_id"], DIGEST_SIZE),
            anchored_at=int(data["anchored_at"]),
            leaf_digest=from_hex(data["leaf_digest"], DIGEST_SIZE),
            proof=InclusionProof(
                int(data["leaf_index"]),
                tuple(Sibling(from_hex(s["digest"], DIGEST_SIZE), s["side"]) for s in data["siblings"]),
            ),
        )


def _h_commit(state: dict, tx: Transaction, height: int) -> None:
    root_hex = tx.payload["root"]
    from_hex(root_hex, DIGEST_SIZE)
    state.setdefault("anchors", {})[tx.tx_id.hex()] = {"root": root_hex, "height": height}


HANDLERS = {"anchor.commit": _h_commit}


@dataclass
class AnchorService:
    """Accumulates digests and commits them as Merkle roots when flushed."""

    batch_limit: int = DEFAULT_BATCH_LIMIT
    pending: list[bytes] = field(default_factory=list)

    def add(self, digest: bytes) -> None:
        if len(digest) != DIGEST_SIZE:
            raise ValueError("anchored digests must be 32 bytes")
        self.pending.append(bytes(digest))

    def add_content(self, content: bytes) -> bytes:
        digest = H(content)
        self.add(digest)
        return digest

    def flush(self, ledger: Ledger, wallet: keyring.Wallet, key_ref: str) -> list[AnchorReceipt]:
        batch, self.pending = self.pending, []
        try:
            return anchor_batch(self, ledger, batch, wallet, key_ref)
        except Exception:
            self.pending = batch + self.pending
            raise


def anchor_batch(
    service: AnchorService,
    ledger: Ledger,
    pending: list[bytes],
    wallet: keyring.Wallet,
    key_ref: str,
) -> list[AnchorReceipt]:
    """Commit ``pending`` as ceil(len / batch_limit) root transactions and return one receipt per digest.

    Blocks are produced until every root transaction is included.
    """
    if not pending:
        raise EmptyBatch("nothing to anchor")
    submitted = []
    for start in range(0, len(pending), service.batch_limit):
        tree = build_tree(pending[start : start + service.batch_limit])
        tx_id = ledger.submit(wallet, key_ref, {"op": "anchor.commit", "root": tree.root.hex()})
        submitted.append((tree, tx_id))
    while any(tx_id not in ledger.receipts for _, tx_id in submitted):
        ledger.produce_block()
    receipts = []
    for tree, tx_id in submitted:
        height = ledger.receipts[tx_id].height
        for i, leaf in enumerate(tree.leaves):
            receipts.append(AnchorReceipt(tree.root, tx_id, height, leaf, prove(tree, i)))
    return receipts


def expected_transactions(k: int, batch_limit: int = DEFAULT_BATCH_LIMIT) -> int:
    return math.ceil(k / batch_limit)


@dataclass
class AnchorCheck:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def verify_anchored(content: bytes, receipt: AnchorReceipt, ledger: Ledger) -> AnchorCheck:
    if H(content) != receipt.leaf_digest:
        return AnchorCheck(False, "content digest differs from receipt leaf")
    if not verify_proof(receipt.leaf_digest, receipt.proof, receipt.root):
        return AnchorCheck(False, "inclusion proof does not reach the receipt root")
    tx = ledger.find_tx(receipt.tx_id)
    if tx is None or tx.op != "anchor.commit":
        return AnchorCheck(False, "receipt transaction is not an anchor on this ledger")
    if tx.payload.get("root") != receipt.root.hex():
        return AnchorCheck(False, "ledger transaction carries a different root")
    if ledger.receipts[receipt.tx_id].height != receipt.anchored_at:
        return AnchorCheck(False, "anchor height differs from receipt")
    return AnchorCheck(True)
