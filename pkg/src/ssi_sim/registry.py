"""Identifier registry: a contract over the ledger state plus an off-chain content store.

Authorization for registry mutations is the transaction signature itself: the
contract requires ``tx.sender`` to be the DID's current controller (or, for
recovery approvals, checks an explicit delegate signature inside the payload).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable

from . import keyring
from .encoding import H, b32, canonical_json, encode_fields, from_hex
from .errors import (
    BadDdo,
    BadQuorum,
    DuplicateApproval,
    DuplicateController,
    DuplicateDid,
    IntegrityViolation,
    NoDelegates,
    NotADelegate,
    NotController,
    NotFound,
    ProposalAlreadyOpen,
    ProposalClosed,
    QuorumNotMet,
    RecoveryInProgress,
    RevokedDid,
    SignatureInvalid,
    SocialPostMissing,
    SsiError,
    TimelockActive,
    UnknownDelegate,
    UnknownDid,
    UnknownProposal,
)
from .ledger import Ledger, Transaction

DID_PREFIX = "did:sim:"
DID_CONTEXT = "https://www.w3.org/ns/did/v1"
DEFAULT_TIMELOCK = 10
SALT_SIZE = 16


class DidState:
    REGISTERED = "Registered"
    UPDATED = "Updated"
    RECOVERING = "Recovering"
    RECOVERED = "Recovered"
    REVOKED = "Revoked"


def make_did(controller_pub: bytes, salt: bytes) -> str:
    return DID_PREFIX + b32(H(controller_pub + salt))


def is_did(value: str) -> bool:
    return isinstance(value, str) and value.startswith(DID_PREFIX) and len(value) == len(DID_PREFIX) + 52


# -- content store ------------------------------------------------------------


class ContentStore:
    """Content-addressed blob store: ``address = hex(H(content))``."""

    def __init__(self) -> None:
        self.blobs: dict[str, bytes] = {}

    def put(self, content: bytes) -> str:
        addr = H(content).hex()
        self.blobs[addr] = bytes(content)
        return addr

    def get(self, addr: str) -> bytes:
        try:
            content = self.blobs[addr]
        except KeyError:
            raise NotFound(f"no content at {addr}") from None
        if H(content).hex() != addr:
            raise IntegrityViolation(f"content at {addr} no longer matches its address")
        return content

    def to_json(self) -> dict:
        return {a: b.hex() for a, b in sorted(self.blobs.items())}

    @classmethod
    def from_json(cls, data: dict) -> ContentStore:
        store = cls()
        store.blobs = {a: bytes.fromhex(b) for a, b in data.items()}
        return store


def put_content(store: ContentStore, content: bytes) -> str:
    return store.put(content)


def get_content(store: ContentStore, addr: str) -> bytes:
    return store.get(addr)


# -- simulated social media ---------------------------------------------------


class SocialStore:
    """Stand-in for a social platform: posts keyed by URL, optionally mirrored to a directory."""

    def __init__(self, root: Path | str | None = None):
        self.root = Path(root) if root is not None else None
        self.posts: dict[str, dict] = {}
        if self.root is not None and self.root.is_dir():
            for f in sorted(self.root.glob("*.json")):
                post = json.loads(f.read_text())
                self.posts[post["post_url"]] = post

    def _path(self, url: str) -> Path:
        assert self.root is not None
        return self.root / f"{H(url.encode()).hex()[:32]}.json"

    def publish(self, profile_url: str, text: str) -> str:
        post_url = f"{profile_url.rstrip('/')}/status/{H(encode_fields(profile_url, text)).hex()[:16]}"
        post = {"post_url": post_url, "profile_url": profile_url, "text": text}
        self.posts[post_url] = post
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            self._path(post_url).write_text(json.dumps(post, sort_keys=True))
        return post_url

    def get(self, post_url: str) -> dict | None:
        return self.posts.get(post_url)

    def delete(self, post_url: str) -> None:
        self.posts.pop(post_url, None)
        if self.root is not None:
            self._path(post_url).unlink(missing_ok=True)


# -- documents ----------------------------------------------------------------


@dataclass(frozen=True)
class SocialBinding:
    profile_url: str
    post_url: str
    attribute_signature: bytes

    def to_json(self) -> dict:
        return {
            "profile_url": self.profile_url,
            "post_url": self.post_url,
            "signature": self.attribute_signature.hex(),
        }

    @classmethod
    def from_json(cls, data: dict) -> SocialBinding:
        return cls(data["profile_url"], data["post_url"], from_hex(data["signature"]))


def social_message(did: str, profile_url: str, post_url: str) -> bytes:
    return encode_fields("ssi-sim/social", did, profile_url, post_url)


@dataclass(frozen=True)
class DidDocument:
    id: str
    public_key: bytes
    service: tuple[dict, ...] = ()
    social: SocialBinding | None = None
    extra: dict | None = None
    context: str = DID_CONTEXT

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "@context": self.context,
            "id": self.id,
            "publicKey": self.public_key.hex(),
            "service": [dict(s) for s in self.service],
            "social": self.social.to_json() if self.social else None,
        }
        if self.extra:
            out["extra"] = self.extra
        return out

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_json())

    @classmethod
    def from_json(cls, data: Any) -> DidDocument:
        try:
            if set(data) - {"@context", "id", "publicKey", "service", "social", "extra"}:
                raise ValueError("unexpected DDO fields")
            services = tuple({"name": str(s["name"]), "endpoint": str(s["endpoint"])} for s in data.get("service", []))
            social = SocialBinding.from_json(data["social"]) if data.get("social") else None
            return cls(
                id=str(data["id"]),
                public_key=from_hex(data["publicKey"], 32),
                service=services,
                social=social,
                extra=data.get("extra"),
                context=str(data["@context"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BadDdo(f"malformed DID document: {exc}") from None

    @classmethod
    def from_bytes(cls, raw: bytes) -> DidDocument:
        try:
            data = json.loads(raw)
        except ValueError as exc:
            raise BadDdo(f"DID document is not JSON: {exc}") from None
        return cls.from_json(data)


def services_from_pairs(pairs: Iterable[tuple[str, str]]) -> tuple[dict, ...]:
    return tuple({"name": n, "endpoint": e} for n, e in pairs)


# -- contract -----------------------------------------------------------------


def _dids(state: dict) -> dict:
    return state.setdefault("dids", {})


def _record(state: dict, did: str, *, allow_revoked: bool = False) -> dict:
    rec = _dids(state).get(did)
    if rec is None:
        raise UnknownDid(f"unknown DID {did}")
    if rec["state"] == DidState.REVOKED and not allow_revoked:
        raise RevokedDid(f"{did} is revoked")
    return rec


def _require_controller(rec: dict, tx: Transaction) -> None:
    if tx.sender.hex() != rec["controller"]:
        raise NotController("transaction not signed by the current controller")


def _h_register(state: dict, tx: Transaction, height: int) -> None:
    p = tx.payload
    did, salt = p["did"], from_hex(p["salt"], SALT_SIZE)
    if make_did(tx.sender, salt) != did:
        raise BadDdo("DID does not derive from the registering key and salt")
    controllers = state.setdefault("controllers", {})
    if tx.sender.hex() in controllers:
        raise DuplicateController("key already controls a DID")
    if did in _dids(state):
        raise DuplicateDid(f"{did} already registered")
    controllers[tx.sender.hex()] = did
    _dids(state)[did] = {
        "controller": tx.sender.hex(),
        "pointer": p["pointer"],
        "delegates": [],
        "threshold": 0,
        "timelock": DEFAULT_TIMELOCK,
        "state": DidState.REGISTERED,
        "proposal": None,
        "keys": [[height, tx.sender.hex()]],
    }


def _h_update(state: dict, tx: Transaction, height: int) -> None:
    rec = _record(state, tx.payload["did"])
    _require_controller(rec, tx)
    rec["pointer"] = tx.payload["pointer"]
    if rec["state"] == DidState.RECOVERING:
        state["proposals"][rec["proposal"]]["prior_state"] = DidState.UPDATED
    else:
        rec["state"] = DidState.UPDATED


def _h_delegates(state: dict, tx: Transaction, height: int) -> None:
    p = tx.payload
    rec = _record(state, p["did"])
    _require_controller(rec, tx)
    if rec["proposal"] is not None:
        raise RecoveryInProgress("delegate list is frozen while a recovery is open")
    delegates = list(p["delegates"])
    threshold, timelock = int(p["threshold"]), int(p["timelock"])
    if not delegates or len(set(delegates)) != len(delegates):
        raise BadQuorum("delegate list must be non-empty and free of duplicates")
    for d in delegates:
        drec = _dids(state).get(d)
        if drec is None or drec["state"] == DidState.REVOKED:
            raise UnknownDelegate(f"delegate {d} is not a registered DID")
    if not 1 <= threshold <= len(delegates):
        raise BadQuorum(f"threshold {threshold} outside 1..{len(delegates)}")
    if timelock < 0:
        raise BadQuorum("timelock must be non-negative")
    rec.update(delegates=delegates, threshold=threshold, timelock=timelock)


def approval_message(proposal_id: str, new_pub: bytes) -> bytes:
    return encode_fields("ssi-sim/approve", proposal_id, new_pub)


def _h_propose(state: dict, tx: Transaction, height: int) -> None:
    p = tx.payload
    rec = _record(state, p["did"])
    new_pub = p["new_pub"]
    if tx.sender.hex() != new_pub:
        raise SignatureInvalid("a recovery must be proposed by the holder of the new key")
    if not rec["delegates"]:
        raise NoDelegates(f"{p['did']} has no recovery delegates")
    if rec["proposal"] is not None:
        raise ProposalAlreadyOpen(f"{p['did']} already has an open recovery")
    if new_pub in state.setdefault("controllers", {}):
        raise DuplicateController("proposed key already controls a DID")
    pid = tx.tx_id.hex()
    state.setdefault("proposals", {})[pid] = {
        "did": p["did"],
        "new_pub": new_pub,
        "opened_at": height,
        "approvals": {},
        "status": "Open",
        "prior_state": rec["state"],
    }
    rec["proposal"] = pid
    rec["state"] = DidState.RECOVERING


def _proposal(state: dict, pid: str) -> dict:
    prop = state.get("proposals", {}).get(pid)
    if prop is None:
        raise UnknownProposal(f"unknown proposal {pid}")
    if prop["status"] != "Open":
        raise ProposalClosed(f"proposal is {prop['status']}")
    return prop


def _h_approve(state: dict, tx: Transaction, height: int) -> None:
    p = tx.payload
    prop = _proposal(state, p["proposal"])
    rec = _record(state, prop["did"])
    delegate = p["delegate"]
    if delegate not in rec["delegates"]:
        raise NotADelegate(f"{delegate} is not a delegate of {prop['did']}")
    if delegate in prop["approvals"]:
        raise DuplicateApproval(f"{delegate} already approved")
    drec = _record(state, delegate)
    sig = from_hex(p["signature"])
    if not keyring.verify(bytes.fromhex(drec["controller"]), approval_message(p["proposal"], bytes.fromhex(prop["new_pub"])), sig):
        raise SignatureInvalid("approval signature does not verify under the delegate's controller")
    prop["approvals"][delegate] = p["signature"]


def recovery_allowed(approvals: int, threshold: int, opened_at: int, timelock: int, now: int) -> str | None:
    """Return the name of the blocking condition, or None when finalization may proceed."""
    if approvals < threshold:
        return "QuorumNotMet"
    if now < opened_at + timelock:
        return "TimelockActive"
    return None


def _h_finalize(state: dict, tx: Transaction, height: int) -> None:
    pid = tx.payload["proposal"]
    prop = _proposal(state, pid)
    rec = _record(state, prop["did"])
    approvals = sum(1 for d in prop["approvals"] if d in rec["delegates"])
    # the clock reading at request time is the last sealed height before inclusion
    blocker = recovery_allowed(approvals, rec["threshold"], prop["opened_at"], rec["timelock"], height - 1)
    if blocker == "QuorumNotMet":
        raise QuorumNotMet(f"{approvals} of {rec['threshold']} approvals")
    if blocker == "TimelockActive":
        raise TimelockActive(f"timelock ends at height {prop['opened_at'] + rec['timelock']}")
    controllers = state.setdefault("controllers", {})
    if prop["new_pub"] in controllers:
        raise DuplicateController("proposed key already controls a DID")
    del controllers[rec["controller"]]
    controllers[prop["new_pub"]] = prop["did"]
    rec["controller"] = prop["new_pub"]
    rec["keys"].append([height, prop["new_pub"]])
    rec["state"] = DidState.RECOVERED
    rec["proposal"] = None
    prop["status"] = "Finalized"
    prop["finalized_at"] = height


def _h_cancel(state: dict, tx: Transaction, height: int) -> None:
    prop = _proposal(state, tx.payload["proposal"])
    rec = _record(state, prop["did"])
    _require_controller(rec, tx)
    prop["status"] = "Cancelled"
    rec["proposal"] = None
    rec["state"] = prop["prior_state"]


def _h_revoke(state: dict, tx: Transaction, height: int) -> None:
    rec = _record(state, tx.payload["did"])
    _require_controller(rec, tx)
    if rec["proposal"] is not None:
        state["proposals"][rec["proposal"]]["status"] = "Cancelled"
        rec["proposal"] = None
    rec["state"] = DidState.REVOKED


HANDLERS = {
    "did.register": _h_register,
    "did.update": _h_update,
    "did.delegates": _h_delegates,
    "did.recover.propose": _h_propose,
    "did.recover.approve": _h_approve,
    "did.recover.finalize": _h_finalize,
    "did.recover.cancel": _h_cancel,
    "did.revoke": _h_revoke,
}


# -- client -------------------------------------------------------------------


@dataclass
class SocialCheck:
    ok: bool
    post_found: bool
    signature_valid: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


class Registry:
    """Client for the registry contract: builds transactions and resolves documents."""

    def __init__(self, ledger: Ledger, store: ContentStore):
        self.ledger = ledger
        self.store = store

    # views
    def record(self, did: str, *, pending: bool = False, allow_revoked: bool = True) -> dict:
        state = self.ledger.pending_state() if pending else self.ledger.state
        return _record(state, did, allow_revoked=allow_revoked)

    def proposal(self, pid: str, *, pending: bool = False) -> dict:
        state = self.ledger.pending_state() if pending else self.ledger.state
        prop = state.get("proposals", {}).get(pid)
        if prop is None:
            raise UnknownProposal(f"unknown proposal {pid}")
        return prop

    def controller(self, did: str) -> bytes:
        return bytes.fromhex(self.record(did, allow_revoked=False)["controller"])

    def key_at(self, did: str, height: int) -> bytes | None:
        rec = self.record(did)
        current = None
        for h, pub in rec["keys"]:
            if h <= height:
                current = pub
        return bytes.fromhex(current) if current else None

    def did_of(self, public: bytes, *, pending: bool = False) -> str | None:
        state = self.ledger.pending_state() if pending else self.ledger.state
        return state.get("controllers", {}).get(public.hex())

    # operations
    def register(
        self,
        wallet: keyring.Wallet,
        key_ref: str,
        *,
        salt: bytes,
        services: Iterable[dict] = (),
        extra: dict | None = None,
        ddo: DidDocument | None = None,
    ) -> str:
        pub = wallet.public(key_ref)
        did = make_did(pub, salt)
        if ddo is None:
            ddo = DidDocument(id=did, public_key=pub, service=tuple(services), extra=extra)
        elif ddo.id != did or ddo.public_key != pub:
            raise BadDdo("document id/publicKey must match the registering key")
        if self.did_of(pub, pending=True) is not None:
            raise DuplicateController("key already controls a DID")
        pointer = self.store.put(ddo.to_bytes())
        self.ledger.submit(wallet, key_ref, {"op": "did.register", "did": did, "pointer": pointer, "salt": salt.hex()})
        return did

    def resolve(self, did: str) -> DidDocument:
        rec = self.record(did, allow_revoked=False)
        ddo = DidDocument.from_bytes(self.store.get(rec["pointer"]))
        if ddo.id != did:
            raise BadDdo("document id does not match the DID")
        controller = bytes.fromhex(rec["controller"])
        if ddo.public_key != controller:
            # recovered but the document has not been republished yet; registry key is authoritative
            ddo = replace(ddo, public_key=controller)
        return ddo

    def dual_resolve(self, did_a: str, did_b: str) -> tuple[DidDocument, DidDocument]:
        out = []
        for side, did in (("a", did_a), ("b", did_b)):
            try:
                out.append(self.resolve(did))
            except SsiError as exc:
                exc.side = side  # type: ignore[attr-defined]
                exc.args = (f"side {side}: {exc}",)
                raise
        return out[0], out[1]

    def update_pointer(self, did: str, new_addr: str, wallet: keyring.Wallet, key_ref: str) -> bytes:
        return self.ledger.submit(wallet, key_ref, {"op": "did.update", "did": did, "pointer": new_addr})

    def update_document(self, ddo: DidDocument, wallet: keyring.Wallet, key_ref: str) -> bytes:
        return self.update_pointer(ddo.id, self.store.put(ddo.to_bytes()), wallet, key_ref)

    def set_delegates(
        self,
        did: str,
        delegates: list[str],
        threshold: int,
        timelock_blocks: int,
        wallet: keyring.Wallet,
        key_ref: str,
    ) -> bytes:
        payload = {
            "op": "did.delegates",
            "did": did,
            "delegates": list(delegates),
            "threshold": threshold,
            "timelock": timelock_blocks,
        }
        return self.ledger.submit(wallet, key_ref, payload)

    def propose_recovery(self, did: str, wallet: keyring.Wallet, key_ref: str) -> str:
        """Open a recovery towards the key ``key_ref``; returns the proposal id."""
        new_pub = wallet.public(key_ref)
        tx_id = self.ledger.submit(wallet, key_ref, {"op": "did.recover.propose", "did": did, "new_pub": new_pub.hex()})
        return tx_id.hex()

    def approve_recovery(self, proposal_id: str, delegate_did: str, wallet: keyring.Wallet, key_ref: str) -> int:
        prop = self.proposal(proposal_id, pending=True)
        sig = keyring.sign(wallet, key_ref, approval_message(proposal_id, bytes.fromhex(prop["new_pub"])))
        payload = {"op": "did.recover.approve", "proposal": proposal_id, "delegate": delegate_did, "signature": sig.hex()}
        self.ledger.submit(wallet, key_ref, payload)
        return len(self.proposal(proposal_id, pending=True)["approvals"])

    def finalize_recovery(self, proposal_id: str, wallet: keyring.Wallet, key_ref: str) -> bytes:
        return self.ledger.submit(wallet, key_ref, {"op": "did.recover.finalize", "proposal": proposal_id})

    def cancel_recovery(self, proposal_id: str, wallet: keyring.Wallet, key_ref: str) -> bytes:
        return self.ledger.submit(wallet, key_ref, {"op": "did.recover.cancel", "proposal": proposal_id})

    def revoke_did(self, did: str, wallet: keyring.Wallet, key_ref: str) -> bytes:
        return self.ledger.submit(wallet, key_ref, {"op": "did.revoke", "did": did})

    # social binding
    def bind_social(
        self,
        did: str,
        profile_url: str,
        social: SocialStore,
        wallet: keyring.Wallet,
        key_ref: str,
    ) -> SocialBinding:
        rec = self.record(did, pending=True, allow_revoked=False)
        if wallet.public(key_ref).hex() != rec["controller"]:
            raise NotController("only the controller may bind a social profile")
        post_url = social.publish(profile_url, f"I control {did}")
        sig = keyring.sign(wallet, key_ref, social_message(did, profile_url, post_url))
        binding = SocialBinding(profile_url, post_url, sig)
        current = DidDocument.from_bytes(self.store.get(rec["pointer"]))
        self.update_document(replace(current, social=binding), wallet, key_ref)
        return binding

    def verify_social_binding(self, did: str, social: SocialStore) -> SocialCheck:
        ddo = self.resolve(did)
        if ddo.social is None:
            return SocialCheck(False, False, False, "document carries no social attribute")
        b = ddo.social
        post = social.get(b.post_url)
        post_found = post is not None and did in post.get("text", "") and post.get("profile_url") == b.profile_url
        sig_ok = keyring.verify(ddo.public_key, social_message(did, b.profile_url, b.post_url), b.attribute_signature)
        reasons = []
        if not post_found:
            reasons.append(SocialPostMissing.__name__)
        if not sig_ok:
            reasons.append(SignatureInvalid.__name__)
        return SocialCheck(post_found and sig_ok, post_found, sig_ok, ",".join(reasons))


def verify_social_binding(registry: Registry, social: SocialStore, did: str) -> SocialCheck:
    return registry.verify_social_binding(did, social)
