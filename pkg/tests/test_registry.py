from __future__ import annotations

import dataclasses

import pytest

from ssi_sim import keyring
from ssi_sim.encoding import H
from ssi_sim.errors import (
    BadQuorum,
    DuplicateApproval,
    DuplicateController,
    IntegrityViolation,
    NoDelegates,
    NotADelegate,
    NotController,
    NotFound,
    ProposalAlreadyOpen,
    QuorumNotMet,
    RecoveryInProgress,
    RevokedDid,
    TimelockActive,
    UnknownDelegate,
    UnknownDid,
)
from ssi_sim.registry import (
    ContentStore,
    DidDocument,
    DidState,
    SocialBinding,
    is_did,
    make_did,
    services_from_pairs,
    social_message,
)

from conftest import make_party


def test_content_store():
    store = ContentStore()
    addr = store.put(b"hello")
    assert addr == H(b"hello").hex() and store.get(addr) == b"hello"
    store.blobs[addr] = b"hellp"
    with pytest.raises(IntegrityViolation):
        store.get(addr)
    with pytest.raises(NotFound):
        store.get("00" * 32)


def test_register_and_resolve(world, party):
    alice = party("alice")
    assert is_did(alice.did) and len(alice.did) == len("did:sim:") + 52
    ddo = world.registry.resolve(alice.did)
    assert ddo.id == alice.did and ddo.public_key == alice.public
    assert DidDocument.from_bytes(ddo.to_bytes()) == ddo
    rec = world.registry.record(alice.did)
    assert rec["state"] == DidState.REGISTERED
    assert H(world.store.get(rec["pointer"])) == H(ddo.to_bytes())


def test_ddo_json_fields(world, party):
    alice = party("alice")
    data = world.registry.resolve(alice.did).to_json()
    assert {"@context", "id", "publicKey", "service", "social"} <= set(data)


def test_unknown_did(world):
    with pytest.raises(UnknownDid):
        world.registry.resolve(make_did(bytes(32), bytes(16)))


def test_duplicate_controller(world, party):
    alice = party("alice")
    with pytest.raises(DuplicateController):
        world.registry.register(alice.wallet, alice.ref, salt=b"another-salt....")


def test_multiple_registration_unrelated_bytes(world, party):
    a = party("person", "hospital")
    b = party("person", "university")
    assert a.did != b.did
    ra, rb = world.registry.record(a.did), world.registry.record(b.did)
    assert ra["controller"] != rb["controller"]
    assert a.public not in world.registry.resolve(b.did).to_bytes()


def test_update_pointer_and_authority(world, party):
    alice, bob = party("alice"), party("bob")
    ddo = world.registry.resolve(alice.did)
    new = dataclasses.replace(ddo, service=services_from_pairs([("inbox", "https://x.example")]))
    world.registry.update_document(new, alice.wallet, alice.ref)
    world.ledger.produce_block()
    assert world.registry.resolve(alice.did) == new
    assert world.registry.record(alice.did)["state"] == DidState.UPDATED
    with pytest.raises(NotController):
        world.registry.update_document(new, bob.wallet, bob.ref)


def test_dual_resolution(world, party):
    a, b = party("a"), party("b")
    x, y = world.registry.dual_resolve(a.did, b.did)
    y2, x2 = world.registry.dual_resolve(b.did, a.did)
    assert (x, y) == (x2, y2)
    world.registry.revoke_did(b.did, b.wallet, b.ref)
    world.ledger.produce_block()
    with pytest.raises(RevokedDid) as exc:
        world.registry.dual_resolve(a.did, b.did)
    assert exc.value.side == "b"


def test_dual_resolution_fault_injection(world, party):
    a, b = party("a"), party("b")
    world.store.blobs[world.registry.record(a.did)["pointer"]] = b"{}"
    with pytest.raises(IntegrityViolation) as exc:
        world.registry.dual_resolve(a.did, b.did)
    assert exc.value.side == "a"


def _setup_recovery(world, threshold=2, timelock=3):
    owner = make_party(world, "owner")
    delegates = [make_party(world, f"d{i}") for i in range(3)]
    world.registry.set_delegates(owner.did, [d.did for d in delegates], threshold, timelock, owner.wallet, owner.ref)
    world.ledger.produce_block()
    owner.wallet.add("new", keyring.derive_subkey(owner.wallet.get("master"), "new"))
    return owner, delegates


def test_delegate_policy_validation(world, party):
    owner = party("owner")
    ds = [party(f"d{i}") for i in range(3)]
    dids = [d.did for d in ds]
    with pytest.raises(BadQuorum):
        world.registry.set_delegates(owner.did, dids, 4, 3, owner.wallet, owner.ref)
    with pytest.raises(UnknownDelegate):
        world.registry.set_delegates(owner.did, dids[:2] + [make_did(bytes(32), bytes(16))], 2, 3, owner.wallet, owner.ref)
    world.registry.set_delegates(owner.did, dids, 2, 3, owner.wallet, owner.ref)


def test_propose_requires_delegates(world, party):
    owner = party("owner")
    owner.wallet.add("new", keyring.derive_subkey(owner.wallet.get("master"), "new"))
    with pytest.raises(NoDelegates):
        world.registry.propose_recovery(owner.did, owner.wallet, "new")


def test_full_recovery(world):
    owner, ds = _setup_recovery(world)
    pid = world.registry.propose_recovery(owner.did, owner.wallet, "new")
    world.ledger.produce_block()
    opened = world.registry.proposal(pid)["opened_at"]
    assert world.registry.record(owner.did)["state"] == DidState.RECOVERING
    with pytest.raises(ProposalAlreadyOpen):
        world.registry.propose_recovery(owner.did, ds[0].wallet, ds[0].ref)
    with pytest.raises(QuorumNotMet):
        world.registry.finalize_recovery(pid, owner.wallet, "new")
    assert world.registry.approve_recovery(pid, ds[0].did, ds[0].wallet, ds[0].ref) == 1
    with pytest.raises(DuplicateApproval):
        world.registry.approve_recovery(pid, ds[0].did, ds[0].wallet, ds[0].ref)
    with pytest.raises(NotADelegate):
        world.registry.approve_recovery(pid, owner.did, owner.wallet, owner.ref)
    world.ledger.produce_block()
    with pytest.raises(QuorumNotMet):
        world.registry.finalize_recovery(pid, owner.wallet, "new")
    world.registry.approve_recovery(pid, ds[1].did, ds[1].wallet, ds[1].ref)
    with pytest.raises(RecoveryInProgress):
        world.registry.set_delegates(owner.did, [ds[0].did], 1, 0, owner.wallet, owner.ref)
    # the proposed key is not the controller until finalization
    ddo = world.registry.resolve(owner.did)
    with pytest.raises(NotController):
        world.registry.update_document(ddo, owner.wallet, "new")
    while world.ledger.current_height() < opened + 3 - 1:
        world.ledger.produce_block()
    with pytest.raises(TimelockActive):
        world.registry.finalize_recovery(pid, owner.wallet, "new")
    world.ledger.produce_block()
    world.registry.finalize_recovery(pid, owner.wallet, "new")
    world.ledger.produce_block()
    assert world.registry.controller(owner.did) == owner.wallet.public("new")
    assert world.registry.record(owner.did)["state"] == DidState.RECOVERED
    with pytest.raises(NotController):
        world.registry.update_document(ddo, owner.wallet, owner.ref)
    assert world.registry.resolve(owner.did).public_key == owner.wallet.public("new")


def test_cancel_restores_state(world):
    owner, ds = _setup_recovery(world)
    # anyone holding the candidate key may propose; only the controller may cancel
    pid = world.registry.propose_recovery(owner.did, owner.wallet, "new")
    world.ledger.produce_block()
    with pytest.raises(NotController):
        world.registry.cancel_recovery(pid, ds[0].wallet, ds[0].ref)
    with pytest.raises(NotController):
        world.registry.cancel_recovery(pid, owner.wallet, "new")
    world.registry.cancel_recovery(pid, owner.wallet, owner.ref)
    world.ledger.produce_block()
    assert world.registry.record(owner.did)["state"] == DidState.REGISTERED
    assert world.registry.proposal(pid)["status"] != "Open"


def test_key_history(world):
    owner, ds = _setup_recovery(world, threshold=1, timelock=0)
    before = world.ledger.current_height()
    pid = world.registry.propose_recovery(owner.did, owner.wallet, "new")
    world.registry.approve_recovery(pid, ds[0].did, ds[0].wallet, ds[0].ref)
    world.ledger.produce_block()
    world.registry.finalize_recovery(pid, owner.wallet, "new")
    world.ledger.produce_block()
    assert world.registry.key_at(owner.did, before) == owner.public
    assert world.registry.key_at(owner.did, world.ledger.current_height()) == owner.wallet.public("new")


def test_social_binding(world, party):
    alice, bob = party("alice"), party("bob")
    binding = world.registry.bind_social(alice.did, "https://social.example/alice", world.social, alice.wallet, alice.ref)
    world.ledger.produce_block()
    assert alice.did in world.social.get(binding.post_url)["text"]
    assert world.registry.verify_social_binding(alice.did, world.social).ok
    with pytest.raises(NotController):
        world.registry.bind_social(alice.did, "https://social.example/mallory", world.social, bob.wallet, bob.ref)
    world.social.delete(binding.post_url)
    check = world.registry.verify_social_binding(alice.did, world.social)
    assert not check.ok and not check.post_found and "SocialPostMissing" in check.reason


def test_social_binding_forged_signature(world, party):
    alice, bob = party("alice"), party("bob")
    post = world.social.publish("https://social.example/alice", f"I control {alice.did}")
    forged = keyring.sign(bob.wallet, bob.ref, social_message(alice.did, "https://social.example/alice", post))
    ddo = dataclasses.replace(
        world.registry.resolve(alice.did), social=SocialBinding("https://social.example/alice", post, forged)
    )
    world.registry.update_document(ddo, alice.wallet, alice.ref)
    world.ledger.produce_block()
    check = world.registry.verify_social_binding(alice.did, world.social)
    assert check.post_found and not check.signature_valid and not check.ok


def test_social_store_directory(tmp_path):
    from ssi_sim.registry import SocialStore

    store = SocialStore(tmp_path)
    url = store.publish("https://social.example/a", "I control did:sim:abc")
    again = SocialStore(tmp_path)
    assert again.get(url)["text"] == "I control did:sim:abc"
    assert len(list(tmp_path.glob("*.json"))) == 1


def test_controller_exclusivity_random_ops(world, rng):
    parties = [make_party(world, f"p{i}") for i in range(4)]
    for _ in range(80):
        target = rng.choice(parties)
        signer = rng.choice(parties)
        ddo = world.registry.resolve(target.did)
        try:
            world.registry.update_document(
                dataclasses.replace(ddo, extra={"n": rng.randrange(10**6)}), signer.wallet, signer.ref
            )
        except NotController:
            assert signer is not target
        if rng.random() < 0.5:
            world.ledger.produce_block()
    world.ledger.produce_until_empty()
    for tx in world.ledger.transactions():
        if tx.op == "did.update":
            r = world.ledger.receipts[tx.tx_id]
            assert r.ok
            assert world.registry.key_at(tx.payload["did"], r.height) == tx.sender
