"""Multi-actor scenario runner.

A scenario is JSON::

    {"name": "...", "seed": 7, "steps": [
        {"action": "actor.create", "name": "uni", "roles": ["Issuer"], "expect": "ok"},
        {"action": "did.register", "actor": "uni", "key": "issuing", "as": "uni_did", "expect": "ok"},
        ...]}

Every step must carry ``expect``: ``"ok"``, ``"valid"``/``"invalid"`` for check
actions, or the name of the error the step must raise.  String arguments
starting with ``$`` refer to values bound earlier with ``"as"``.  Steps that
submit transactions are followed by block production unless ``"produce": false``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from . import anchor as anchor_mod
from . import credentials as creds
from . import keyring, shamir
from .encoding import H, canonical_json
from .errors import (
    ColdWalletOffline,
    ExpectationMismatch,
    KeyMissing,
    NotHolder,
    NotIssuer,
    ParseError,
    SsiError,
    UnresolvedReference,
)
from .keyring import KeyState, MasterKey, SubKey, WalletKind
from .registry import services_from_pairs
from .share_links import OneOff, TimeWindow, revoke_message
from .world import World

PATTERNS = (
    "Master & Sub Key Generation",
    "Hot & Cold Wallet Storage",
    "Key Shards",
    "Identifier Registry",
    "Multiple Registration",
    "Blockchain & Social Media Account Pair",
    "Dual Resolution",
    "Delegate List",
    "Selective Content Generation",
    "Time-Constrained Access",
    "One-Off Access",
    "Blockchain Anchor",
)

ROLES = frozenset({"Holder", "Issuer", "Verifier"})
CHECK_ACTIONS = frozenset({"cred.verify", "did.verify_social", "anchor.verify", "ledger.verify"})


def load_lifecycles() -> dict:
    return json.loads(resources.files("ssi_sim.data").joinpath("lifecycles.json").read_text())


def bundled_scenarios() -> dict[str, Path]:
    root = resources.files("ssi_sim.data").joinpath("scenarios")
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


# -- scenario model -----------------------------------------------------------


@dataclass
class Step:
    index: int
    action: str
    args: dict
    expect: str
    produce: bool = True


@dataclass
class Scenario:
    name: str
    seed: int
    steps: list[Step]
    description: str = ""

    @classmethod
    def from_json(cls, data: Any) -> Scenario:
        if not isinstance(data, dict) or not isinstance(data.get("steps"), list):
            raise ParseError("scenario must be an object with a 'steps' list")
        steps = []
        for i, raw in enumerate(data["steps"]):
            if not isinstance(raw, dict) or "action" not in raw:
                raise ParseError(f"step {i}: missing 'action'")
            if "expect" not in raw:
                raise ParseError(f"step {i}: missing mandatory 'expect'")
            args = {k: v for k, v in raw.items() if k not in {"action", "expect", "produce", "note"}}
            steps.append(Step(i, str(raw["action"]), args, str(raw["expect"]), bool(raw.get("produce", True))))
        return cls(str(data.get("name", "scenario")), int(data.get("seed", 0)), steps, str(data.get("description", "")))

    @classmethod
    def load(cls, path: Path | str) -> Scenario:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ParseError(f"cannot read scenario {path}: {exc}") from None
        return cls.from_json(data)


@dataclass
class Transcript:
    scenario: str
    seed: int
    records: list[dict] = field(default_factory=list)
    final_ledger_digest: str = ""

    @property
    def mismatches(self) -> list[dict]:
        return [r for r in self.records if r["outcome"] != r["expected"]]

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def raise_for_mismatch(self) -> None:
        if self.mismatches:
            first = self.mismatches[0]
            raise ExpectationMismatch(
                f"step {first['step']} ({first['action']}): expected {first['expected']}, got {first['outcome']}"
            )

    def patterns(self) -> set[str]:
        return {p for r in self.records for p in r.get("patterns", [])}

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "records": self.records,
            "final_ledger_digest": self.final_ledger_digest,
        }

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_json())

    @classmethod
    def from_json(cls, data: dict) -> Transcript:
        return cls(data["scenario"], int(data["seed"]), list(data["records"]), data.get("final_ledger_digest", ""))


@dataclass
class Actor:
    name: str
    roles: frozenset[str]
    wallets: dict[str, str] = field(default_factory=dict)  # kind -> world wallet name
    keys: dict[str, str] = field(default_factory=dict)  # key ref -> world wallet name
    dids: list[str] = field(default_factory=list)


# -- runner -------------------------------------------------------------------


class Runner:
    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.world = World(self.seed)
        self.actors: dict[str, Actor] = {}
        self.env: dict[str, Any] = {}
        self.contents: dict[str, bytes] = {}
        self._key_states: dict[str, str] = {}
        self._did_states: dict[str, str] = {}
        self._cred_events: list[dict] = []
        self._stolen: set[str] = set()  # attacker copies; the owner's copy carries the lifecycle
        self._patterns: set[str] = set()
        self._step: Step | None = None

    # references
    def _ref(self, value: Any) -> Any:
        if isinstance(value, str) and value.startswith("$"):
            name = value[1:]
            if name not in self.env:
                raise UnresolvedReference(f"step {self._step.index}: undefined reference {value}")
            return self.env[name]
        if isinstance(value, list):
            return [self._ref(v) for v in value]
        return value

    def arg(self, key: str, default: Any = ...) -> Any:
        assert self._step is not None
        if key not in self._step.args:
            if default is ...:
                raise ParseError(f"step {self._step.index} ({self._step.action}): missing argument {key!r}")
            return default
        return self._ref(self._step.args[key])

    def actor(self, key: str = "actor") -> Actor:
        name = self.arg(key)
        if name not in self.actors:
            raise UnresolvedReference(f"step {self._step.index}: undefined actor {name!r}")
        return self.actors[name]

    def key(self, actor: Actor, key: str = "key") -> tuple[keyring.Wallet, str]:
        ref = self.arg(key)
        if ref not in actor.keys:
            raise UnresolvedReference(f"step {self._step.index}: actor {actor.name!r} has no key {ref!r}")
        return self.world.wallet(actor.keys[ref]), ref

    def bind(self, value: Any) -> None:
        name = self.arg("as", None)
        if name is not None:
            self.env[name] = value

    def pattern(self, *names: str) -> None:
        self._patterns.update(names)

    # lifecycle tracking
    def _collect_events(self) -> list[dict]:
        events: list[dict] = []
        for actor in self.actors.values():
            for ref, wname in actor.keys.items():
                key = self.world.wallet(wname).entries.get(ref)
                if key is None:
                    continue
                kid = f"{actor.name}/{ref}"
                if kid in self._stolen:
                    continue
                prev = self._key_states.get(kid)
                now = key.state.value
                if prev is None:
                    events.append({"object": "key", "id": kid, "to": KeyState.GENERATED.value})
                    prev = KeyState.GENERATED.value
                if now != prev:
                    events.append({"object": "key", "id": kid, "to": now})
                self._key_states[kid] = now
        for did, rec in sorted(self.world.ledger.state.get("dids", {}).items()):
            prev = self._did_states.get(did)
            if rec["state"] != prev:
                events.append({"object": "did", "id": did, "to": rec["state"]})
                self._did_states[did] = rec["state"]
        events.extend(self._cred_events)
        self._cred_events = []
        return events

    def cred_event(self, cred_id: str, state: str) -> None:
        self._cred_events.append({"object": "credential", "id": cred_id, "to": state})

    # main loop
    def run(self) -> Transcript:
        transcript = Transcript(self.scenario.name, self.seed)
        for step in self.scenario.steps:
            self._step = step
            self._patterns = set()
            handler = ACTIONS.get(step.action)
            if handler is None:
                raise ParseError(f"step {step.index}: unknown action {step.action!r}")
            detail: Any = None
            try:
                detail = handler(self)
                outcome = "ok"
                if step.action in CHECK_ACTIONS:
                    outcome = "valid" if detail.pop("valid") else "invalid"
            except (UnresolvedReference, ParseError):
                raise
            except SsiError as exc:
                outcome = exc.code
                if isinstance(exc, ColdWalletOffline):
                    self.pattern("Hot & Cold Wallet Storage")
            if step.produce and self.world.ledger.pool:
                self.world.ledger.produce_until_empty()
            record = {
                "step": step.index,
                "action": step.action,
                "expected": step.expect,
                "outcome": outcome,
                "height": self.world.ledger.current_height(),
                "events": self._collect_events(),
                "patterns": sorted(self._patterns),
            }
            if detail:
                record["detail"] = detail
            transcript.records.append(record)
        transcript.final_ledger_digest = self.world.ledger.head.block_hash.hex()
        return transcript


def run_scenario(path: Path | str | Scenario, seed: int | None = None) -> Transcript:
    scenario = path if isinstance(path, Scenario) else Scenario.load(path)
    return Runner(scenario, seed).run()


# -- actions ------------------------------------------------------------------

ACTIONS: dict[str, Callable[[Runner], Any]] = {}


def action(name: str):
    def deco(fn):
        ACTIONS[name] = fn
        return fn

    return deco


@action("actor.create")
def _actor_create(r: Runner):
    name = r.arg("name")
    roles = frozenset(r.arg("roles", ["Holder"]))
    if not roles <= ROLES:
        raise ParseError(f"step {r._step.index}: unknown roles {sorted(roles - ROLES)}")
    actor = Actor(name, roles)
    actor.wallets["hot"] = f"{name}.hot"
    r.world.wallets[f"{name}.hot"] = keyring.create_wallet(f"{name}.hot", WalletKind.HOT)
    if r.arg("cold", False):
        actor.wallets["cold"] = f"{name}.cold"
        r.world.wallets[f"{name}.cold"] = keyring.create_wallet(f"{name}.cold", WalletKind.COLD)
        r.pattern("Hot & Cold Wallet Storage")
    r.actors[name] = actor


def _wallet_of(r: Runner, actor: Actor, kind: str) -> keyring.Wallet:
    if kind not in actor.wallets:
        raise UnresolvedReference(f"step {r._step.index}: actor {actor.name!r} has no {kind} wallet")
    if kind == "cold":
        r.pattern("Hot & Cold Wallet Storage")
    return r.world.wallet(actor.wallets[kind])


@action("key.master")
def _key_master(r: Runner):
    actor = r.actor()
    wallet = _wallet_of(r, actor, r.arg("wallet", "hot"))
    r.pattern("Master & Sub Key Generation")
    ref = r.arg("key", "master")
    wallet.add(ref, keyring.generate_master(r.world.rng.randbytes(32)))
    actor.keys[ref] = wallet.name


@action("key.derive")
def _key_derive(r: Runner):
    actor = r.actor()
    master_wallet, master_ref = r.key(actor, "master")
    r.pattern("Master & Sub Key Generation")
    if master_wallet.kind is WalletKind.COLD:
        r.pattern("Hot & Cold Wallet Storage")
        if not master_wallet.connected:
            raise ColdWalletOffline(f"cold wallet {master_wallet.name!r} is offline")
    master = master_wallet.get(master_ref)
    if not isinstance(master, MasterKey):
        raise KeyMissing(f"{master_ref!r} is not a master key")
    label = r.arg("label")
    sub = keyring.derive_subkey(master, label)
    target = _wallet_of(r, actor, r.arg("wallet", "hot"))
    ref = r.arg("key", label)
    target.add(ref, sub)
    actor.keys[ref] = target.name
    return {"public": sub.public.hex()}


@action("key.split")
def _key_split(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    r.pattern("Key Shards")
    shards = shamir.split_key(wallet.get(ref).seed, int(r.arg("t")), int(r.arg("n")), r.world.rng)
    r.bind(shamir.export_shards(shards))
    return {"shards": len(shards)}


@action("key.lose")
def _key_lose(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    wallet.set_state(ref, KeyState.LOST)


@action("key.compromise")
def _key_compromise(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    stolen = wallet.get(ref)
    wallet.set_state(ref, KeyState.COMPROMISED)
    attacker_name = r.arg("attacker", None)
    if attacker_name is not None:
        attacker = r.actor("attacker")
        aw = _wallet_of(r, attacker, "hot")
        aref = r.arg("attacker_key", "stolen")
        aw.add(aref, stolen)
        attacker.keys[aref] = aw.name
        r._stolen.add(f"{attacker.name}/{aref}")


@action("key.restore")
def _key_restore(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    r.pattern("Key Shards")
    shards = shamir.import_shards(r.arg("shards"))
    wanted = set(r.arg("indices"))
    chosen = [s for s in shards if s.index in wanted]
    secret = shamir.reconstruct_key(chosen)
    old = wallet.get(ref)
    if H(secret) != H(old.seed):
        raise shamir.DigestMismatch("restored secret does not belong to this key")
    wallet.set_state(ref, KeyState.RECOVERED)
    return {"used": sorted(wanted)}


@action("key.revoke_sub")
def _key_revoke_sub(r: Runner):
    actor = r.actor()
    wallet, master_ref = r.key(actor, "master")
    sub_wallet, sub_ref = r.key(actor)
    r.pattern("Master & Sub Key Generation")
    if sub_wallet is not wallet:
        if not wallet.connected:
            raise ColdWalletOffline(f"cold wallet {wallet.name!r} is offline")
        keyring.sign(wallet, master_ref, b"revoke-subkey" + sub_wallet.public(sub_ref), purpose="registry-update")
        sub_wallet.set_state(sub_ref, KeyState.REVOKED)
    else:
        keyring.revoke_subkey(wallet, master_ref, sub_ref)


@action("wallet.connect")
def _wallet_connect(r: Runner):
    keyring.connect_cold(_wallet_of(r, r.actor(), r.arg("wallet", "cold")))
    r.pattern("Hot & Cold Wallet Storage")


@action("wallet.disconnect")
def _wallet_disconnect(r: Runner):
    keyring.disconnect_cold(_wallet_of(r, r.actor(), r.arg("wallet", "cold")))
    r.pattern("Hot & Cold Wallet Storage")


@action("wallet.sign")
def _wallet_sign(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    if wallet.kind is WalletKind.COLD:
        r.pattern("Hot & Cold Wallet Storage")
    msg = str(r.arg("message")).encode()
    sig = keyring.sign(wallet, ref, msg, purpose=r.arg("purpose", "transaction"))
    r.bind(sig.hex())
    return {"verified": keyring.verify(wallet.public(ref), msg, sig)}


# identifiers


def _services(r: Runner) -> tuple[dict, ...]:
    return services_from_pairs((s["name"], s["endpoint"]) for s in r.arg("services", []))


def _controller_keys(r: Runner, actor: Actor) -> list:
    """Keys held by ``actor`` that currently control one of its DIDs."""
    out = []
    for did in actor.dids:
        pub = bytes.fromhex(r.world.registry.record(did, pending=True)["controller"])
        for kref, wname in actor.keys.items():
            k = r.world.wallet(wname).entries.get(kref)
            if k is not None and k.public == pub:
                out.append(k)
    return out


@action("did.register")
def _did_register(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    r.pattern("Identifier Registry")
    key = wallet.get(ref)
    if isinstance(key, SubKey) and any(
        isinstance(k, SubKey) and k.parent_fingerprint == key.parent_fingerprint for k in _controller_keys(r, actor)
    ):
        r.pattern("Multiple Registration")
    did = r.world.registry.register(wallet, ref, salt=r.world.rng.randbytes(16), services=_services(r))
    actor.dids.append(did)
    r.bind(did)
    return {"did": did}


@action("did.resolve")
def _did_resolve(r: Runner):
    r.pattern("Identifier Registry")
    ddo = r.world.registry.resolve(r.arg("did"))
    return {"publicKey": ddo.public_key.hex()}


@action("did.dual_resolve")
def _did_dual(r: Runner):
    r.pattern("Dual Resolution")
    a, b = r.world.registry.dual_resolve(r.arg("a"), r.arg("b"))
    return {"a": a.id, "b": b.id}


@action("did.update")
def _did_update(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    r.pattern("Identifier Registry")
    did = r.arg("did")
    current = r.world.registry.resolve(did)
    ddo = dataclasses.replace(current, service=_services(r) or current.service, extra=r.arg("extra", current.extra))
    r.world.registry.update_document(ddo, wallet, ref)


@action("did.delegates")
def _did_delegates(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    r.pattern("Delegate List")
    r.world.registry.set_delegates(
        r.arg("did"), list(r.arg("delegates")), int(r.arg("threshold")), int(r.arg("timelock")), wallet, ref
    )


@action("did.revoke")
def _did_revoke(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    r.pattern("Identifier Registry")
    r.world.registry.revoke_did(r.arg("did"), wallet, ref)


@action("recover.propose")
def _recover_propose(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    r.pattern("Delegate List")
    pid = r.world.registry.propose_recovery(r.arg("did"), wallet, ref)
    r.bind(pid)
    return {"proposal": pid}


@action("recover.approve")
def _recover_approve(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    r.pattern("Delegate List")
    count = r.world.registry.approve_recovery(r.arg("proposal"), r.arg("delegate"), wallet, ref)
    return {"approvals": count}


@action("recover.finalize")
def _recover_finalize(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    r.pattern("Delegate List")
    pid = r.arg("proposal")
    prop = r.world.registry.proposal(pid, pending=True)
    old = bytes.fromhex(r.world.registry.record(prop["did"], pending=True)["controller"])
    tx_id = r.world.registry.finalize_recovery(pid, wallet, ref)
    r.world.ledger.produce_until_empty()
    receipt = r.world.ledger.receipts[tx_id]
    if receipt.ok:
        # the owner retires its copy of the replaced key; stolen copies elsewhere stay usable
        owner = next((a for a in r.actors.values() if prop["did"] in a.dids), None)
        if owner is not None:
            for kref, wname in owner.keys.items():
                k = r.world.wallet(wname).entries.get(kref)
                if k is not None and k.public == old and k.state is not KeyState.REVOKED:
                    r.world.wallet(wname).set_state(kref, KeyState.REVOKED)
    return {"controller": prop["new_pub"]}


@action("recover.cancel")
def _recover_cancel(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    r.pattern("Delegate List")
    r.world.registry.cancel_recovery(r.arg("proposal"), wallet, ref)


@action("did.bind_social")
def _did_bind_social(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    r.pattern("Blockchain & Social Media Account Pair")
    binding = r.world.registry.bind_social(r.arg("did"), r.arg("profile"), r.world.social, wallet, ref)
    r.bind(binding.post_url)
    return {"post_url": binding.post_url}


@action("did.verify_social")
def _did_verify_social(r: Runner):
    r.pattern("Blockchain & Social Media Account Pair")
    check = r.world.registry.verify_social_binding(r.arg("did"), r.world.social)
    return {"valid": check.ok, "post_found": check.post_found, "signature_valid": check.signature_valid}


@action("social.delete_post")
def _social_delete(r: Runner):
    r.pattern("Blockchain & Social Media Account Pair")
    r.world.social.delete(r.arg("post"))


# credentials


def _require_role(actor: Actor, role: str, exc: type[SsiError]) -> None:
    if role not in actor.roles:
        raise exc(f"actor {actor.name!r} lacks the {role} role")


@action("cred.issue")
def _cred_issue(r: Runner):
    actor = r.actor()
    _require_role(actor, "Issuer", NotIssuer)
    wallet, ref = r.key(actor)
    scheme = creds.Scheme(r.arg("scheme", "Plain"))
    if scheme is not creds.Scheme.PLAIN:
        r.pattern("Selective Content Generation")
    issued = creds.issue(
        r.world.registry, wallet, ref, r.arg("issuer"), r.arg("holder"), dict(r.arg("claims")), scheme, r.world.rng
    )
    items = r.world.record_issued(issued)
    for h in items:
        r.cred_event(h.credential.cred_id, "Issued")
    ids = [h.credential.cred_id for h in items]
    r.bind(ids if isinstance(issued, list) else ids[0])
    return {"credentials": ids}


@action("cred.issue_predicate")
def _cred_issue_predicate(r: Runner):
    actor = r.actor()
    _require_role(actor, "Issuer", NotIssuer)
    wallet, ref = r.key(actor)
    r.pattern("Selective Content Generation")
    src = r.arg("source")
    held = creds.issue_predicate(
        r.world.registry,
        wallet,
        ref,
        r.arg("issuer"),
        r.arg("holder"),
        creds.Claim(src["name"], str(src["value"])),
        r.arg("predicate"),
        r.world.rng,
    )
    r.world.record_issued(held)
    r.cred_event(held.credential.cred_id, "Issued")
    r.bind(held.credential.cred_id)
    return {"credentials": [held.credential.cred_id]}


def _held(r: Runner, key: str = "cred") -> creds.HeldCredential:
    cred_id = r.arg(key)
    if isinstance(cred_id, list):
        cred_id = cred_id[int(r.arg("pick", 0))]
    try:
        return r.world.held[cred_id]
    except KeyError:
        raise UnresolvedReference(f"step {r._step.index}: unknown credential {cred_id}") from None


@action("cred.present")
def _cred_present(r: Runner):
    actor = r.actor()
    _require_role(actor, "Holder", NotHolder)
    wallet, ref = r.key(actor)
    held = _held(r)
    disclose = list(r.arg("disclose", []))
    if held.credential.scheme is not creds.Scheme.PLAIN:
        r.pattern("Selective Content Generation")
    pres = creds.make_presentation(r.world.registry, wallet, ref, held, disclose, r.arg("audience"))
    pid = H(pres.to_bytes()).hex()
    r.world.presentations[pid] = pres
    r.cred_event(held.credential.cred_id, "Presented")
    r.bind(pid)
    return {"presentation": pid, "disclosed": [d[0] for d in pres.disclosed]}


def _presentation(r: Runner, key: str = "presentation") -> creds.Presentation:
    pid = r.arg(key)
    try:
        return r.world.presentations[pid]
    except KeyError:
        raise UnresolvedReference(f"step {r._step.index}: unknown presentation {pid}") from None


@action("cred.verify")
def _cred_verify(r: Runner):
    pres = _presentation(r)
    if pres.credential.scheme is not creds.Scheme.PLAIN:
        r.pattern("Selective Content Generation")
    report = creds.verify_presentation(r.world.registry, pres, r.arg("audience"))
    return {"valid": report.valid, "failures": report.failures(), "undisclosed": report.undisclosed}


@action("cred.revoke")
def _cred_revoke(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    held = _held(r)
    issuer = r.arg("issuer")
    creds.revoke(
        r.world.registry, wallet, ref, held.credential.cred_id, issuer_did=issuer, issued=r.world.issued.get(issuer, {})
    )
    r.world.ledger.produce_until_empty()
    r.cred_event(held.credential.cred_id, "Revoked")


# share links


@action("link.create")
def _link_create(r: Runner):
    actor = r.actor()
    _require_role(actor, "Holder", NotHolder)
    pres = _presentation(r)
    if r.arg("one_off", False):
        policy: Any = OneOff()
        r.pattern("One-Off Access")
    else:
        r.pattern("Time-Constrained Access")
        if "expires_in" in r._step.args:
            policy = TimeWindow(r.world.ledger.current_height() + int(r.arg("expires_in")))
        else:
            policy = TimeWindow(int(r.arg("expires_at")))
    link = r.world.shares.create_link(pres, policy, r.arg("now", None))
    r.bind(link.token)
    return {"token": link.token}


def _link_pattern(r: Runner, token: str) -> None:
    try:
        link = r.world.shares.link(token)
    except SsiError:
        return
    r.pattern("One-Off Access" if isinstance(link.policy, OneOff) else "Time-Constrained Access")


@action("link.access")
def _link_access(r: Runner):
    token = r.arg("token")
    _link_pattern(r, token)
    pres = r.world.shares.access(token, r.arg("now", None))
    pid = H(pres.to_bytes()).hex()
    r.world.presentations.setdefault(pid, pres)
    r.bind(pid)
    return {"presentation": pid}


@action("link.revoke")
def _link_revoke(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    token = r.arg("token")
    _link_pattern(r, token)
    r.world.shares.revoke_link(token, keyring.sign(wallet, ref, revoke_message(token)))


@action("link.purge")
def _link_purge(r: Runner):
    for link in r.world.shares.links():
        r.pattern("One-Off Access" if isinstance(link.policy, OneOff) else "Time-Constrained Access")
    return {"purged": r.world.shares.purge_expired(r.arg("now", None))}


# anchoring


def _content(r: Runner) -> bytes:
    if "content" in r._step.args:
        return str(r.arg("content")).encode()
    ref = r.arg("of")
    if ref in r.world.presentations:
        return r.world.presentations[ref].to_bytes()
    if ref in r.world.held:
        return r.world.held[ref].credential.to_bytes()
    raise UnresolvedReference(f"step {r._step.index}: nothing to anchor for {ref!r}")


@action("anchor.add")
def _anchor_add(r: Runner):
    r.pattern("Blockchain Anchor")
    content = _content(r)
    digest = r.world.anchors.add_content(content)
    r.contents[digest.hex()] = content
    r.bind(digest.hex())
    return {"digest": digest.hex()}


@action("anchor.flush")
def _anchor_flush(r: Runner):
    actor = r.actor()
    wallet, ref = r.key(actor)
    r.pattern("Blockchain Anchor")
    receipts = r.world.anchors.flush(r.world.ledger, wallet, ref)
    by_digest = {}
    for i, rc in enumerate(receipts):
        by_digest.setdefault(rc.leaf_digest.hex(), rc.to_json())
        r.world.receipts[f"{rc.tx_id.hex()}:{i}"] = rc
    r.bind(by_digest)
    return {"receipts": len(receipts), "transactions": len({rc.tx_id for rc in receipts})}


@action("anchor.verify")
def _anchor_verify(r: Runner):
    r.pattern("Blockchain Anchor")
    receipts = r.arg("receipts")
    item = r.arg("item")
    if item not in receipts:
        raise UnresolvedReference(f"step {r._step.index}: no receipt for {item}")
    receipt = anchor_mod.AnchorReceipt.from_json(receipts[item])
    content = bytearray(r.contents[item])
    if r.arg("tamper", False):
        content[0] ^= 0x01
    check = anchor_mod.verify_anchored(bytes(content), receipt, r.world.ledger)
    return {"valid": check.ok, "reason": check.reason}


# ledger


@action("ledger.produce")
def _ledger_produce(r: Runner):
    for _ in range(int(r.arg("count", 1))):
        r.world.ledger.produce_block()


@action("ledger.verify")
def _ledger_verify(r: Runner):
    report = r.world.ledger.verify_chain()
    return {"valid": report.ok, "reason": report.reason}


# -- lifecycle checking -------------------------------------------------------


@dataclass
class LifecycleReport:
    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def lifecycle_check(transcript: Transcript | dict, tables: dict | None = None) -> LifecycleReport:
    """Replay every lifecycle event in a transcript against the transition tables."""
    tables = tables or load_lifecycles()
    records = transcript.records if isinstance(transcript, Transcript) else transcript.get("records", [])
    current: dict[tuple[str, str], str] = {}
    report = LifecycleReport()
    for rec in records:
        for ev in rec.get("events", []):
            kind, oid, to = ev["object"], ev["id"], ev["to"]
            table = tables.get(kind)
            if table is None:
                report.violations.append({"step": rec["step"], "object": kind, "id": oid, "from": None, "to": to,
                                          "reason": "unknown object kind"})
                continue
            prev = current.get((kind, oid))
            legal = to in table["initial"] if prev is None else to in table["transitions"].get(prev, [])
            if not legal:
                report.violations.append({"step": rec["step"], "object": kind, "id": oid, "from": prev, "to": to,
                                          "reason": "illegal transition"})
            current[(kind, oid)] = to
    return report


def coverage(transcripts: list[Transcript]) -> dict[str, list[str]]:
    """Map each pattern to the scenarios that exercised it."""
    out: dict[str, list[str]] = {p: [] for p in PATTERNS}
    for t in transcripts:
        for p in sorted(t.patterns()):
            out.setdefault(p, []).append(t.scenario)
    return out
