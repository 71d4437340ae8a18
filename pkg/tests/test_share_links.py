from __future__ import annotations

import random
import threading

import pytest

from ssi_sim import credentials as creds
from ssi_sim import keyring
from ssi_sim.encoding import H
from ssi_sim.errors import ClockSkew, Consumed, Expired, ExpiryInPast, NotHolder, Revoked, UnknownToken
from ssi_sim.share_links import LinkState, OneOff, Outcome, ShareService, TimeWindow, revoke_message

from conftest import make_party


@pytest.fixture
def setup(world):
    issuer, holder = make_party(world, "issuer"), make_party(world, "holder")
    held = creds.issue(
        world.registry, issuer.wallet, issuer.ref, issuer.did, holder.did, {"a": "1", "b": "2"}, "Hashed", world.rng
    )
    pres = creds.make_presentation(world.registry, holder.wallet, holder.ref, held, ["a"], "v")
    return world, holder, issuer, pres


def test_create_time_window(setup):
    world, _, _, pres = setup
    h = world.ledger.current_height()
    link = world.shares.create_link(pres, TimeWindow(h + 5))
    assert link.state is LinkState.ACTIVE and link.created_at == h
    assert len(link.token) == 22  # 16 bytes, urlsafe base64 without padding


def test_expiry_must_be_in_future(setup):
    world, _, _, pres = setup
    with pytest.raises(ExpiryInPast):
        world.shares.create_link(pres, TimeWindow(world.ledger.current_height()))


def test_independent_windows(setup):
    world, _, _, pres = setup
    a = world.shares.create_link(pres, TimeWindow(10), now=0)
    b = world.shares.create_link(pres, TimeWindow(20), now=0)
    with pytest.raises(Expired):
        world.shares.access(a.token, now=10)
    assert world.shares.access(b.token, now=10) == pres
    assert world.shares.link(b.token).state is LinkState.ACTIVE


def test_window_boundary(setup):
    world, _, _, pres = setup
    link = world.shares.create_link(pres, TimeWindow(7), now=2)
    assert world.shares.access(link.token, now=6) == pres
    assert world.shares.access(link.token, now=6) == pres
    with pytest.raises(Expired):
        world.shares.access(link.token, now=7)
    # monotone denial: going back in time does not revive it
    with pytest.raises(Expired):
        world.shares.access(link.token, now=3)
    with pytest.raises(ClockSkew):
        world.shares.access(link.token, now=1)


def test_one_off(setup):
    world, _, _, pres = setup
    link = world.shares.create_link(pres, OneOff())
    assert world.shares.access(link.token) == pres
    with pytest.raises(Consumed):
        world.shares.access(link.token)
    assert world.shares.log.successes(link.token) == 1


def test_unknown_token_logged(setup):
    world = setup[0]
    with pytest.raises(UnknownToken):
        world.shares.access("nope")
    assert world.shares.log.entries[-1].outcome is Outcome.UNKNOWN_TOKEN


def test_revocation(setup):
    world, holder, issuer, pres = setup
    link = world.shares.create_link(pres, TimeWindow(world.ledger.current_height() + 10))
    with pytest.raises(NotHolder):
        world.shares.revoke_link(link.token, keyring.sign(issuer.wallet, issuer.ref, revoke_message(link.token)))
    world.shares.revoke_link(link.token, keyring.sign(holder.wallet, holder.ref, revoke_message(link.token)))
    with pytest.raises(Revoked):
        world.shares.access(link.token)


def test_revoke_consumed_is_idempotent(setup):
    world, holder, _, pres = setup
    link = world.shares.create_link(pres, OneOff())
    world.shares.access(link.token)
    world.shares.revoke_link(link.token, keyring.sign(holder.wallet, holder.ref, revoke_message(link.token)))
    assert world.shares.link(link.token).state is LinkState.CONSUMED


def test_purge(setup):
    world, _, _, pres = setup
    assert world.shares.purge_expired(now=0) == 0
    tokens = [world.shares.create_link(pres, TimeWindow(3), now=0).token for _ in range(3)]
    live = world.shares.create_link(pres, TimeWindow(50), now=0).token
    assert world.shares.purge_expired(now=5) == 3
    assert world.shares.purge_expired(now=5) == 0
    for t in tokens:
        assert not world.shares.has_content(t)
        with pytest.raises(Expired):
            world.shares.access(t, now=5)
    assert world.shares.access(live, now=5) == pres


def test_presentation_unchanged_by_access(setup):
    world, _, _, pres = setup
    before = H(pres.to_bytes())
    link = world.shares.create_link(pres, OneOff())
    world.shares.access(link.token)
    assert H(pres.to_bytes()) == before


def test_content_encrypted_at_rest(setup):
    world, _, _, pres = setup
    link = world.shares.create_link(pres, OneOff())
    dumped = repr(world.shares.to_json())
    assert pres.to_bytes().hex() not in dumped
    assert pres.credential.issuer_did not in dumped.replace(link.holder_did, "")


def test_persistence_round_trip(setup):
    world, _, _, pres = setup
    link = world.shares.create_link(pres, OneOff())
    again = ShareService.from_json(world.shares.to_json(), random.Random(0), clock=world.ledger.current_height)
    assert again.access(link.token) == pres
    with pytest.raises(Consumed):
        again.access(link.token)


def test_concurrent_one_off(setup):
    world, _, _, pres = setup
    link = world.shares.create_link(pres, OneOff())
    outcomes: list[str] = []
    lock = threading.Lock()
    barrier = threading.Barrier(100)

    def hit():
        barrier.wait()
        try:
            world.shares.access(link.token)
            r = "ok"
        except Consumed:
            r = "Consumed"
        with lock:
            outcomes.append(r)

    threads = [threading.Thread(target=hit) for _ in range(100)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert outcomes.count("ok") == 1 and outcomes.count("Consumed") == 99
    assert world.shares.log.successes(link.token) == 1
