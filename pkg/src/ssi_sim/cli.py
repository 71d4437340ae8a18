"""``ssi-sim`` command line.

Every command loads the world from ``--state`` (created on first use with
``--seed``), performs one operation, produces blocks for any submitted
transactions unless ``--no-produce`` is given, and saves the world back.
Results are printed as JSON on stdout; errors go to stderr as JSON.

Exit codes: 0 success, 1 expectation mismatch or failed operation/check,
2 usage or parse error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from . import anchor as anchor_mod
from . import credentials as creds
from . import harness, keyring, shamir
from .encoding import H
from .errors import ParseError, SsiError, UnresolvedReference
from .keyring import KeyState, MasterKey, WalletKind
from .registry import DEFAULT_TIMELOCK, services_from_pairs
from .share_links import OneOff, TimeWindow, revoke_message
from .world import World

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2
DEFAULT_STATE = ".ssi-sim"


class CommandFailed(Exception):
    """A check ran to completion and answered 'no'."""

    def __init__(self, result: Any):
        super().__init__("check failed")
        self.result = result


def _emit(obj: Any) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _wallet(world: World, name: str, *, create: bool = False, kind: str = "hot") -> keyring.Wallet:
    if create and name not in world.wallets:
        world.wallets[name] = keyring.create_wallet(name, kind)
    return world.wallet(name)


def _pairs(items: Sequence[str] | None, what: str) -> list[tuple[str, str]]:
    out = []
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise ParseError(f"{what} must look like name=value, got {item!r}")
        out.append((name, value))
    return out


def _read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None


# -- ledger -------------------------------------------------------------------


def cmd_ledger_produce(w: World, a) -> dict:
    blocks = [w.ledger.produce_block() for _ in range(a.count)]
    return {"height": w.ledger.current_height(), "blocks": [b.block_hash.hex() for b in blocks]}


def cmd_ledger_verify(w: World, a) -> dict:
    r = w.ledger.verify_chain()
    out = {"ok": r.ok, "failed_height": r.failed_height, "reason": r.reason}
    if not r.ok:
        raise CommandFailed(out)
    return out


def cmd_ledger_dump(w: World, a) -> dict | None:
    data = w.ledger.dumps()
    if a.out:
        Path(a.out).write_bytes(data)
        return {"written": a.out}
    sys.stdout.write(data.decode() + "\n")
    return None


# -- keys and wallets ---------------------------------------------------------


def cmd_key_gen(w: World, a) -> dict:
    wallet = _wallet(w, a.wallet, create=True)
    key = keyring.generate_master(w.rng.randbytes(32))
    wallet.add(a.ref, key)
    return {"wallet": wallet.name, "ref": a.ref, "public": key.public.hex(), "fingerprint": key.fingerprint.hex()}


def cmd_key_derive(w: World, a) -> dict:
    src = w.wallet(a.wallet)
    if src.kind is WalletKind.COLD and not src.connected:
        raise keyring.ColdWalletOffline(f"cold wallet {src.name!r} is offline")
    master = src.get(a.master)
    if not isinstance(master, MasterKey):
        raise keyring.KeyMissing(f"{a.master!r} is not a master key")
    sub = keyring.derive_subkey(master, a.label)
    target = _wallet(w, a.into or a.wallet, create=True)
    ref = a.ref or a.label
    target.add(ref, sub)
    return {"wallet": target.name, "ref": ref, "public": sub.public.hex()}


def cmd_key_split(w: World, a) -> dict:
    key = w.wallet(a.wallet).get(a.ref)
    shards = shamir.split_key(key.seed, a.t, a.n, w.rng)
    text = shamir.export_shards(shards)
    if a.out:
        Path(a.out).write_text(text)
    return {"shards": len(shards), "threshold": a.t, "written": a.out} if a.out else {"shards": text.splitlines()}


def cmd_key_restore(w: World, a) -> dict:
    try:
        text = Path(a.shards).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {a.shards}: {exc}") from None
    shards = shamir.import_shards(text)
    if a.indices:
        wanted = {int(i) for i in a.indices.split(",")}
        shards = [s for s in shards if s.index in wanted]
    secret = shamir.reconstruct_key(shards)
    wallet = _wallet(w, a.wallet, create=True)
    if a.ref in wallet.entries:
        if H(wallet.get(a.ref).seed) != H(secret):
            raise shamir.DigestMismatch("restored secret does not belong to this key")
        key = wallet.set_state(a.ref, KeyState.RECOVERED)
    else:
        key = keyring.key_from_seed(secret, a.ref)
        wallet.add(a.ref, key)
    return {"wallet": wallet.name, "ref": a.ref, "public": key.public.hex(), "state": key.state.value}


def cmd_key_state(w: World, a) -> dict:
    key = w.wallet(a.wallet).set_state(a.ref, KeyState(a.key_state))
    return {"ref": a.ref, "state": key.state.value}


def cmd_wallet_create(w: World, a) -> dict:
    if a.name in w.wallets:
        raise ParseError(f"wallet {a.name!r} already exists")
    wallet = _wallet(w, a.name, create=True, kind=a.kind)
    return {"wallet": wallet.name, "kind": wallet.kind.value, "connected": wallet.connected}


def cmd_wallet_connect(w: World, a) -> dict:
    wallet = keyring.connect_cold(w.wallet(a.name))
    return {"wallet": wallet.name, "connected": wallet.connected}


def cmd_wallet_disconnect(w: World, a) -> dict:
    wallet = keyring.disconnect_cold(w.wallet(a.name))
    return {"wallet": wallet.name, "connected": wallet.connected}


def cmd_wallet_sign(w: World, a) -> dict:
    wallet = w.wallet(a.wallet)
    sig = keyring.sign(wallet, a.ref, a.message.encode(), purpose=a.purpose)
    return {"public": wallet.public(a.ref).hex(), "signature": sig.hex()}


def cmd_wallet_list(w: World, a) -> dict:
    return {
        name: {
            "kind": wl.kind.value,
            "connected": wl.connected,
            "keys": {ref: {"public": k.public.hex(), "state": k.state.value} for ref, k in sorted(wl.entries.items())},
        }
        for name, wl in sorted(w.wallets.items())
    }


# -- identifiers --------------------------------------------------------------


def cmd_did_register(w: World, a) -> dict:
    did = w.registry.register(
        w.wallet(a.wallet), a.ref, salt=w.rng.randbytes(16), services=services_from_pairs(_pairs(a.service, "--service"))
    )
    return {"did": did}


def cmd_did_resolve(w: World, a) -> dict:
    return w.registry.resolve(a.did).to_json()


def cmd_did_dual_resolve(w: World, a) -> dict:
    first, second = w.registry.dual_resolve(a.a, a.b)
    return {"a": first.to_json(), "b": second.to_json()}


def cmd_did_update(w: World, a) -> dict:
    current = w.registry.resolve(a.did)
    services = services_from_pairs(_pairs(a.service, "--service")) or current.service
    w.registry.update_document(dataclasses.replace(current, service=services), w.wallet(a.wallet), a.ref)
    return {"did": a.did}


def cmd_did_delegates(w: World, a) -> dict:
    w.registry.set_delegates(a.did, a.delegate, a.threshold, a.timelock, w.wallet(a.wallet), a.ref)
    return {"did": a.did, "delegates": a.delegate, "threshold": a.threshold, "timelock": a.timelock}


def cmd_did_revoke(w: World, a) -> dict:
    w.registry.revoke_did(a.did, w.wallet(a.wallet), a.ref)
    return {"did": a.did}


def cmd_recover_propose(w: World, a) -> dict:
    return {"proposal": w.registry.propose_recovery(a.did, w.wallet(a.wallet), a.ref)}


def cmd_recover_approve(w: World, a) -> dict:
    count = w.registry.approve_recovery(a.proposal, a.delegate, w.wallet(a.wallet), a.ref)
    return {"proposal": a.proposal, "approvals": count}


def cmd_recover_finalize(w: World, a) -> dict:
    tx_id = w.registry.finalize_recovery(a.proposal, w.wallet(a.wallet), a.ref)
    return {"proposal": a.proposal, "tx_id": tx_id.hex()}


def cmd_recover_cancel(w: World, a) -> dict:
    w.registry.cancel_recovery(a.proposal, w.wallet(a.wallet), a.ref)
    return {"proposal": a.proposal}


def cmd_did_bind_social(w: World, a) -> dict:
    return w.registry.bind_social(a.did, a.profile, w.social, w.wallet(a.wallet), a.ref).to_json()


def cmd_did_verify_social(w: World, a) -> dict:
    c = w.registry.verify_social_binding(a.did, w.social)
    out = {"ok": c.ok, "post_found": c.post_found, "signature_valid": c.signature_valid, "reason": c.reason}
    if not c.ok:
        raise CommandFailed(out)
    return out


# -- credentials --------------------------------------------------------------


def cmd_cred_issue(w: World, a) -> dict:
    claims = dict(_pairs(a.claim, "--claim"))
    issued = creds.issue(
        w.registry, w.wallet(a.wallet), a.ref, a.issuer, a.holder, claims, creds.Scheme(a.scheme), w.rng
    )
    return {"credentials": [h.credential.cred_id for h in w.record_issued(issued)]}


def cmd_cred_issue_predicate(w: World, a) -> dict:
    name, value = _pairs([a.source], "--source")[0]
    held = creds.issue_predicate(
        w.registry, w.wallet(a.wallet), a.ref, a.issuer, a.holder, creds.Claim(name, value), a.predicate, w.rng
    )
    w.record_issued(held)
    return {"credentials": [held.credential.cred_id]}


def _held(w: World, cred_id: str) -> creds.HeldCredential:
    try:
        return w.held[cred_id]
    except KeyError:
        raise creds.UnknownCredential(f"no held credential {cred_id}") from None


def cmd_cred_present(w: World, a) -> dict:
    disclose = [n for n in (a.disclose or "").split(",") if n]
    pres = creds.make_presentation(w.registry, w.wallet(a.wallet), a.ref, _held(w, a.cred), disclose, a.audience)
    pid = H(pres.to_bytes()).hex()
    w.presentations[pid] = pres
    if a.out:
        Path(a.out).write_bytes(pres.to_bytes())
    return {"presentation": pid, "disclosed": [d[0] for d in pres.disclosed]}


def cmd_cred_verify(w: World, a) -> dict:
    if a.file:
        report = creds.verify_presentation_bytes(w.registry, Path(a.file).read_bytes(), a.audience)
    else:
        try:
            pres = w.presentations[a.presentation]
        except KeyError:
            raise UnresolvedReference(f"unknown presentation {a.presentation}") from None
        report = creds.verify_presentation(w.registry, pres, a.audience)
    out = report.to_json()
    if not report.valid:
        raise CommandFailed(out)
    return out


def cmd_cred_revoke(w: World, a) -> dict:
    cred_id = a.cred
    creds.revoke(w.registry, w.wallet(a.wallet), a.ref, cred_id, issuer_did=a.issuer, issued=w.issued.get(a.issuer, {}))
    return {"revoked": cred_id}


# -- share links --------------------------------------------------------------


def cmd_link_create(w: World, a) -> dict:
    try:
        pres = w.presentations[a.presentation]
    except KeyError:
        raise UnresolvedReference(f"unknown presentation {a.presentation}") from None
    now = a.now if a.now is not None else w.ledger.current_height()
    if a.one_off:
        policy: Any = OneOff()
    elif a.expires_at is not None:
        policy = TimeWindow(a.expires_at)
    elif a.expires_in is not None:
        policy = TimeWindow(now + a.expires_in)
    else:
        raise ParseError("link create needs --one-off, --expires-at or --expires-in")
    return w.shares.create_link(pres, policy, a.now).to_json()


def cmd_link_access(w: World, a) -> dict:
    pres = w.shares.access(a.token, a.now)
    pid = H(pres.to_bytes()).hex()
    w.presentations.setdefault(pid, pres)
    return {"presentation": pid, "content": pres.to_json()}


def cmd_link_revoke(w: World, a) -> dict:
    sig = keyring.sign(w.wallet(a.wallet), a.ref, revoke_message(a.token))
    w.shares.revoke_link(a.token, sig)
    return {"token": a.token, "state": w.shares.link(a.token).state.value}


def cmd_link_purge(w: World, a) -> dict:
    return {"purged": w.shares.purge_expired(a.now)}


def cmd_link_list(w: World, a) -> dict:
    return {"links": [link.to_json() for link in w.shares.links()]}


# -- anchoring ----------------------------------------------------------------


def _content_arg(w: World, a) -> bytes:
    sources = [x is not None for x in (a.path, a.content, a.file, a.of)]
    if sum(sources) != 1:
        raise ParseError("give exactly one content source: a file path, --content, --file or --of")
    if a.path is not None:
        return Path(a.path).read_bytes()
    if a.content is not None:
        return a.content.encode()
    if a.file is not None:
        return Path(a.file).read_bytes()
    if a.of is not None:
        if a.of in w.presentations:
            return w.presentations[a.of].to_bytes()
        return _held(w, a.of).credential.to_bytes()
    raise ParseError("give one of --content, --file or --of")


def cmd_anchor_add(w: World, a) -> dict:
    digest = w.anchors.add_content(_content_arg(w, a))
    return {"digest": digest.hex(), "pending": len(w.anchors.pending)}


def cmd_anchor_flush(w: World, a) -> dict:
    receipts = w.anchors.flush(w.ledger, w.wallet(a.wallet), a.ref)
    for i, rc in enumerate(receipts):
        w.receipts[f"{rc.tx_id.hex()}:{i}"] = rc
    out = {"transactions": len({rc.tx_id for rc in receipts}), "receipts": [rc.to_json() for rc in receipts]}
    if a.out_dir:
        d = Path(a.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        for rc in receipts:
            (d / f"{rc.leaf_digest.hex()}.json").write_text(json.dumps(rc.to_json(), indent=2, sort_keys=True))
        out["written"] = str(d)
    return out


def cmd_anchor_verify(w: World, a) -> dict:
    path = a.receipt or a.receipt_path
    if path is None:
        raise ParseError("anchor verify needs a receipt file")
    receipt = anchor_mod.AnchorReceipt.from_json(_read_json(path))
    check = anchor_mod.verify_anchored(_content_arg(w, a), receipt, w.ledger)
    out = {"ok": check.ok, "reason": check.reason}
    if not check.ok:
        raise CommandFailed(out)
    return out


# -- scenarios ----------------------------------------------------------------


def _scenario_path(name: str) -> Path:
    bundled = harness.bundled_scenarios()
    if name in bundled and not Path(name).exists():
        return bundled[name]
    return Path(name)


def cmd_run(a) -> int:
    transcript = harness.run_scenario(_scenario_path(a.scenario), a.seed)
    data = transcript.to_bytes()
    if a.transcript:
        Path(a.transcript).write_bytes(data)
    for rec in transcript.records:
        mark = "ok " if rec["outcome"] == rec["expected"] else "MISMATCH"
        print(f"{mark} step {rec['step']:>3} {rec['action']:<20} expected={rec['expected']} outcome={rec['outcome']}",
              file=sys.stderr)
    summary = {
        "scenario": transcript.scenario,
        "seed": transcript.seed,
        "steps": len(transcript.records),
        "mismatches": [r["step"] for r in transcript.mismatches],
        "final_ledger_digest": transcript.final_ledger_digest,
        "transcript_digest": H(data).hex(),
        "patterns": sorted(transcript.patterns()),
    }
    _emit(summary)
    return EXIT_OK if transcript.ok else EXIT_MISMATCH


def cmd_check(a) -> int:
    transcript = harness.Transcript.from_json(_read_json(a.transcript))
    report = harness.lifecycle_check(transcript)
    _emit({"violations": report.violations, "ok": report.ok})
    return EXIT_OK if report.ok else EXIT_MISMATCH


def cmd_serve(a) -> int:
    import uvicorn

    from .api import create_app

    uvicorn.run(create_app(state_dir=a.state, seed=a.seed or 0), host=a.host, port=a.port)
    return EXIT_OK


# -- remote share-link client -------------------------------------------------


def _remote(a) -> int:
    import httpx

    url = a.url.rstrip("/")
    params = {"now": a.now} if a.now is not None else {}
    if a.command == "access":
        resp = httpx.get(f"{url}/share/{a.token}", params=params)
    else:
        raise ParseError(f"link {a.command} does not support --url")
    body = resp.json() if resp.content else {}
    if resp.is_success:
        _emit(body)
        return EXIT_OK
    print(json.dumps(body, sort_keys=True), file=sys.stderr)
    return EXIT_MISMATCH


# -- parser -------------------------------------------------------------------


def _wallet_key(p: argparse.ArgumentParser) -> None:
    p.add_argument("--wallet", required=True, help="wallet name")
    p.add_argument("--ref", required=True, help="key reference inside the wallet")


def _content_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("path", nargs="?", help="file whose bytes are anchored")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--content", help="literal text")
    g.add_argument("--file", help="read bytes from a file")
    g.add_argument("--of", help="a stored credential or presentation id")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssi-sim", description="Self-sovereign identity pattern simulator.")
    parser.add_argument("--seed", type=int, default=None, help="PRNG seed for a new state or a scenario run")
    parser.add_argument("--state", default=os.environ.get("SSI_SIM_STATE", DEFAULT_STATE), help="state directory")
    parser.add_argument("--now", type=int, default=None, help="override the logical clock (block height)")
    parser.add_argument("--no-produce", action="store_true", help="leave submitted transactions in the pool")
    groups = parser.add_subparsers(dest="group", required=True)

    def sub(group: argparse._SubParsersAction, name: str, fn: Callable, help_: str) -> argparse.ArgumentParser:
        p = group.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        return p

    # ledger
    g = groups.add_parser("ledger", help="simulated ledger").add_subparsers(dest="command", required=True)
    sub(g, "produce", cmd_ledger_produce, "produce blocks").add_argument("--count", type=int, default=1)
    sub(g, "verify", cmd_ledger_verify, "verify the hash chain and signatures")
    sub(g, "dump", cmd_ledger_dump, "print or write the ledger").add_argument("--out")

    # keys
    g = groups.add_parser("key", help="master and sub keys, shards").add_subparsers(dest="command", required=True)
    p = sub(g, "gen", cmd_key_gen, "generate a master key")
    p.add_argument("--wallet", required=True)
    p.add_argument("--ref", default="master")
    p = sub(g, "derive", cmd_key_derive, "derive a sub key from a master")
    p.add_argument("--wallet", required=True, help="wallet holding the master")
    p.add_argument("--master", default="master")
    p.add_argument("--label", required=True)
    p.add_argument("--ref", help="reference for the new key (default: label)")
    p.add_argument("--into", help="store the sub key in another wallet")
    p = sub(g, "split", cmd_key_split, "split a key into shards")
    _wallet_key(p)
    p.add_argument("-t", type=int, required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--out")
    p = sub(g, "restore", cmd_key_restore, "reconstruct a key from shards")
    _wallet_key(p)
    p.add_argument("--shards", required=True, help="file with one hex shard per line")
    p.add_argument("--indices", help="comma-separated shard indices to use")
    p = sub(g, "mark", cmd_key_state, "record a key as lost, compromised or revoked")
    _wallet_key(p)
    p.add_argument("--to", dest="key_state", choices=["Lost", "Compromised", "Revoked"], required=True)

    # wallets
    g = groups.add_parser("wallet", help="hot and cold wallets").add_subparsers(dest="command", required=True)
    p = sub(g, "create", cmd_wallet_create, "create a wallet")
    p.add_argument("name")
    p.add_argument("--kind", choices=["hot", "cold"], default="hot")
    sub(g, "connect", cmd_wallet_connect, "connect a cold wallet").add_argument("name")
    sub(g, "disconnect", cmd_wallet_disconnect, "disconnect a cold wallet").add_argument("name")
    p = sub(g, "sign", cmd_wallet_sign, "sign a message")
    _wallet_key(p)
    p.add_argument("--message", required=True)
    p.add_argument("--purpose", default="transaction")
    sub(g, "list", cmd_wallet_list, "list wallets and keys")

    # identifiers
    g = groups.add_parser("did", help="identifier registry").add_subparsers(dest="command", required=True)
    p = sub(g, "register", cmd_did_register, "register a DID for a key")
    _wallet_key(p)
    p.add_argument("--service", action="append", help="name=endpoint, repeatable")
    sub(g, "resolve", cmd_did_resolve, "resolve a DID").add_argument("did")
    p = sub(g, "dual-resolve", cmd_did_dual_resolve, "resolve two DIDs atomically")
    p.add_argument("a")
    p.add_argument("b")
    p = sub(g, "update", cmd_did_update, "republish a DID document")
    p.add_argument("--did", required=True)
    _wallet_key(p)
    p.add_argument("--service", action="append")
    p = sub(g, "delegates", cmd_did_delegates, "set the recovery delegates")
    p.add_argument("--did", required=True)
    _wallet_key(p)
    p.add_argument("--delegate", action="append", required=True)
    p.add_argument("--threshold", type=int, required=True)
    p.add_argument("--timelock", type=int, default=DEFAULT_TIMELOCK)
    p = sub(g, "revoke", cmd_did_revoke, "revoke a DID")
    p.add_argument("--did", required=True)
    _wallet_key(p)
    rec = g.add_parser("recover", help="delegate recovery").add_subparsers(dest="recover_command", required=True)
    p = sub(rec, "propose", cmd_recover_propose, "propose a new controller (the signing key)")
    p.add_argument("--did", required=True)
    _wallet_key(p)
    for name, fn in (("approve", cmd_recover_approve), ("finalize", cmd_recover_finalize), ("cancel", cmd_recover_cancel)):
        p = sub(rec, name, fn, f"{name} a recovery proposal")
        p.add_argument("--proposal", required=True)
        _wallet_key(p)
        if name == "approve":
            p.add_argument("--delegate", required=True, help="the approving delegate's DID")
    p = sub(g, "bind-social", cmd_did_bind_social, "pair a DID with a social profile")
    p.add_argument("--did", required=True)
    p.add_argument("--profile", required=True)
    _wallet_key(p)
    sub(g, "verify-social", cmd_did_verify_social, "check a social pairing both ways").add_argument("did")

    # credentials
    g = groups.add_parser("cred", help="verifiable credentials").add_subparsers(dest="command", required=True)
    p = sub(g, "issue", cmd_cred_issue, "issue a credential")
    p.add_argument("--issuer", required=True)
    p.add_argument("--holder", required=True)
    _wallet_key(p)
    p.add_argument("--scheme", choices=[s.value for s in creds.Scheme if s is not creds.Scheme.PREDICATE], default="Plain")
    p.add_argument("--claim", action="append", required=True, help="name=value, repeatable")
    p = sub(g, "issue-predicate", cmd_cred_issue_predicate, "issue a predicate credential")
    p.add_argument("--issuer", required=True)
    p.add_argument("--holder", required=True)
    _wallet_key(p)
    p.add_argument("--source", required=True, help="name=value of the attested attribute")
    p.add_argument("--predicate", required=True, help="e.g. age>=18")
    p = sub(g, "present", cmd_cred_present, "create a presentation")
    p.add_argument("--cred", required=True)
    _wallet_key(p)
    p.add_argument("--disclose", help="comma-separated attribute names")
    p.add_argument("--audience", required=True)
    p.add_argument("--out", help="also write the serialized presentation")
    p = sub(g, "verify", cmd_cred_verify, "verify a presentation")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--presentation")
    src.add_argument("--file")
    p.add_argument("--audience", required=True)
    p = sub(g, "revoke", cmd_cred_revoke, "revoke a credential")
    p.add_argument("--cred", required=True)
    p.add_argument("--issuer", required=True)
    _wallet_key(p)

    # share links
    g = groups.add_parser("link", help="share links").add_subparsers(dest="command", required=True)
    p = sub(g, "create", cmd_link_create, "create a share link")
    p.add_argument("--presentation", required=True)
    pol = p.add_mutually_exclusive_group(required=True)
    pol.add_argument("--one-off", action="store_true")
    pol.add_argument("--expires-at", type=int)
    pol.add_argument("--expires-in", type=int)
    p = sub(g, "access", cmd_link_access, "follow a share link")
    p.add_argument("token")
    p.add_argument("--url", help="use a running service instead of local state")
    p = sub(g, "revoke", cmd_link_revoke, "revoke a share link")
    p.add_argument("token")
    _wallet_key(p)
    sub(g, "purge", cmd_link_purge, "drop content of links that can no longer be served")
    sub(g, "list", cmd_link_list, "list links")

    # anchoring
    g = groups.add_parser("anchor", help="Merkle anchoring").add_subparsers(dest="command", required=True)
    _content_flags(sub(g, "add", cmd_anchor_add, "queue a digest"))
    p = sub(g, "flush", cmd_anchor_flush, "commit queued digests")
    _wallet_key(p)
    p.add_argument("--out-dir", help="write one receipt file per digest")
    p = sub(g, "verify", cmd_anchor_verify, "verify content against a receipt")
    _content_flags(p)
    p.add_argument("receipt_path", nargs="?", metavar="receipt", help="receipt file")
    p.add_argument("--receipt", help="receipt file (alternative to the positional form)")

    # scenarios and service
    p = groups.add_parser("run", help="run a scenario file or a bundled scenario name")
    p.add_argument("scenario")
    p.add_argument("--transcript", help="write the canonical transcript here")
    p.set_defaults(direct=cmd_run)
    p = groups.add_parser("check", help="lifecycle-check a transcript")
    p.add_argument("transcript")
    p.set_defaults(direct=cmd_check)
    p = groups.add_parser("serve", help="run the HTTP service over --state")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(direct=cmd_serve)
    return parser


def _error(exc: BaseException, code: str | None = None) -> None:
    print(json.dumps({"error": code or type(exc).__name__, "detail": str(exc)}, sort_keys=True), file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if hasattr(a, "direct"):
            return a.direct(a)
        if a.group == "link" and a.command == "access" and a.url:
            return _remote(a)
        world = World.open(a.state, a.seed or 0)
        try:
            result = a.fn(world, a)
            code = EXIT_OK
        except CommandFailed as failed:
            result, code = failed.result, EXIT_MISMATCH
        except SsiError:
            # denied link accesses are logged, so persist before reporting
            world.save(a.state)
            raise
        if world.ledger.pool and not a.no_produce:
            world.ledger.produce_until_empty()
        world.save(a.state)
        if result is not None:
            _emit(result)
        return code
    except (ParseError, UnresolvedReference) as exc:
        _error(exc, exc.code)
        return EXIT_USAGE
    except SsiError as exc:
        _error(exc, exc.code)
        return EXIT_MISMATCH
    except ValueError as exc:
        _error(exc, "ParseError")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
