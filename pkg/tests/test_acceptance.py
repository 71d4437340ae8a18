"""Acceptance criteria, each run at its stated scale and time budget.

Every test prints one ``PASS``/``FAIL`` line naming its criterion.
"""

from __future__ import annotations

import json
import random
import threading
import time
from itertools import combinations

import pytest

from ssi_sim import anchor, harness, keyring, shamir
from ssi_sim import credentials as creds
from ssi_sim.cli import main as cli_main
from ssi_sim.encoding import H, canonical_json
from ssi_sim.errors import NotController, NotEnoughShards, SsiError
from ssi_sim.share_links import OneOff, Outcome, TimeWindow
from ssi_sim.world import World

from conftest import make_party
from oracles import gf_mul_slow, merkle_root_naive, recovery_truth, window_truth


@pytest.fixture
def verdict(capsys):
    def emit(name: str, ok: bool, elapsed: float, budget: float | None = None, detail: str = "") -> None:
        within = budget is None or elapsed < budget
        status = "PASS" if ok and within else "FAIL"
        timing = f"{elapsed:.2f}s" + (f" (budget {budget:.0f}s)" if budget is not None else "")
        with capsys.disabled():
            print(f"\n[{status}] {name}: {timing}{' ' + detail if detail else ''}")
        assert ok, detail or name
        assert within, f"{name} took {elapsed:.2f}s, budget {budget}s"

    return emit


class _FixedCoefficient:
    """Stands in for the PRNG so a 1-byte split uses a chosen slope."""

    def __init__(self, coefficient: int):
        self.coefficient = coefficient

    def randbytes(self, n: int) -> bytes:
        return bytes([self.coefficient]) * n


def test_shamir_suite(verdict):
    start = time.perf_counter()
    rng = random.Random(2024)
    failures = []
    for trial in range(200):
        secret = rng.randbytes(32)
        for n in range(1, 6):
            for t in range(1, n + 1):
                shards = shamir.split_key(secret, t, n, rng)
                for size in range(0, n + 1):
                    for subset in combinations(shards, size):
                        if size >= t:
                            if shamir.reconstruct_key(list(subset)) != secret:
                                failures.append((trial, t, n, size))
                        elif size == t - 1:
                            try:
                                shamir.reconstruct_key(list(subset))
                                failures.append((trial, t, n, size, "reconstructed below threshold"))
                            except NotEnoughShards:
                                pass

    # 1-byte secrets, t=2: for every shard index, the shard value seen over all slopes
    # is the same multiset whatever the secret, so one shard is consistent with all 256 secrets
    hiding_ok = True
    for x in (1, 2, 3):
        reference = None
        for s in range(256):
            seen = set()
            for a in range(256):
                shard = shamir.split_key(bytes([s]), 2, 3, _FixedCoefficient(a))[x - 1]
                assert shard.payload[0] == s ^ gf_mul_slow(a, x)
                seen.add(shard.payload[0])
            hiding_ok &= len(seen) == 256
            reference = reference or seen
            hiding_ok &= seen == reference
    elapsed = time.perf_counter() - start
    verdict("Shamir suite", not failures and hiding_ok, elapsed, 10, f"failures={len(failures)}")


def _recovery_case(threshold: int, approvals: int, delta: int, timelock: int) -> tuple[str, bool]:
    world = World(threshold * 100 + approvals * 10 + delta)
    owner = make_party(world, "owner", produce=False)
    delegates = [make_party(world, f"d{i}", produce=False) for i in range(3)]
    world.ledger.produce_block()
    world.registry.set_delegates(owner.did, [d.did for d in delegates], threshold, timelock, owner.wallet, owner.ref)
    owner.wallet.add("new", keyring.derive_subkey(owner.wallet.get("master"), "new"))
    world.ledger.produce_block()
    pid = world.registry.propose_recovery(owner.did, owner.wallet, "new")
    for d in delegates[:approvals]:
        world.registry.approve_recovery(pid, d.did, d.wallet, d.ref)
    world.ledger.produce_block()
    opened = world.registry.proposal(pid)["opened_at"]
    for _ in range(delta):
        world.ledger.produce_block()
    assert world.ledger.current_height() - opened == delta
    try:
        tx_id = world.registry.finalize_recovery(pid, owner.wallet, "new")
    except SsiError as exc:
        return exc.code, True
    world.ledger.produce_block()
    if not world.ledger.receipts[tx_id].ok or world.registry.controller(owner.did) != owner.wallet.public("new"):
        return "not applied", False
    ddo = world.registry.resolve(owner.did)
    try:
        world.registry.update_document(ddo, owner.wallet, owner.ref)
    except NotController:
        return "ok", True
    return "ok", False


def test_delegate_recovery_grid(verdict):
    start = time.perf_counter()
    timelock = 3
    mismatches = []
    cases = 0
    for threshold in range(1, 4):
        for approvals in range(0, 4):
            for delta in range(0, timelock + 2):
                cases += 1
                outcome, old_key_locked = _recovery_case(threshold, approvals, delta, timelock)
                expected = recovery_truth(threshold, approvals, delta, timelock)
                if outcome != expected or not old_key_locked:
                    mismatches.append((threshold, approvals, delta, outcome, expected))
    elapsed = time.perf_counter() - start
    verdict("Delegate recovery grid", not mismatches and cases == 60, elapsed, 5, f"cases={cases} mismatches={mismatches}")


def _presentation(world: World):
    issuer, holder = make_party(world, "issuer"), make_party(world, "holder")
    held = creds.issue(
        world.registry, issuer.wallet, issuer.ref, issuer.did, holder.did, {"degree": "BSc"}, "Hashed", world.rng
    )
    return creds.make_presentation(world.registry, holder.wallet, holder.ref, held, ["degree"], "employer")


def test_one_off_exactly_once(verdict):
    start = time.perf_counter()
    world = World(7)
    pres = _presentation(world)
    tokens = [world.shares.create_link(pres, OneOff()).token for _ in range(100)]
    releases = {t: 0 for t in tokens}
    lock = threading.Lock()
    barrier = threading.Barrier(100)

    def accessor(seed: int) -> None:
        order = tokens[:]
        random.Random(seed).shuffle(order)
        barrier.wait()
        for t in order:
            try:
                got = world.shares.access(t)
            except SsiError:
                continue
            if got == pres:
                with lock:
                    releases[t] += 1

    threads = [threading.Thread(target=accessor, args=(i,)) for i in range(100)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    log = world.shares.log
    per_token = [log.successes(t) for t in tokens]
    total = log.successes()
    consumed = sum(1 for e in log.entries if e.outcome is Outcome.CONSUMED)
    ok = total == 100 and all(c == 1 for c in per_token) and all(r == 1 for r in releases.values())
    ok &= consumed == 100 * 99 and len(log.entries) == 10_000
    elapsed = time.perf_counter() - start
    verdict("One-off exactly-once", ok, elapsed, 30, f"successes={total} consumed={consumed}")


def test_time_window_boundary(verdict):
    start = time.perf_counter()
    world = World(8)
    pres = _presentation(world)
    svc = world.shares
    discrepancies = []
    for created in range(11):
        for expires in range(11):
            for now in range(11):
                expected = window_truth(created, expires, now)
                try:
                    link = svc.create_link(pres, TimeWindow(expires), now=created)
                    got = "Success" if svc.access(link.token, now=now) == pres else "wrong content"
                except SsiError as exc:
                    got = exc.code
                if got != expected:
                    discrepancies.append((created, expires, now, got, expected))
    elapsed = time.perf_counter() - start
    verdict("Time-window boundary", not discrepancies, elapsed, None, f"triples=1331 discrepancies={len(discrepancies)}")


def test_selective_disclosure(verdict):
    start = time.perf_counter()
    world = World(9)
    issuer, holder = make_party(world, "issuer"), make_party(world, "holder")
    rng = random.Random(10)
    problems = []
    serialized = []
    for i in range(500):
        names = rng.sample(["dob", "address", "name", "degree", "gpa", "nationality", "email"], rng.randint(1, 6))
        claims = {n: rng.randbytes(12).hex() for n in names}
        held = creds.issue(world.registry, issuer.wallet, issuer.ref, issuer.did, holder.did, claims, "Hashed", world.rng)
        full = creds.make_presentation(world.registry, holder.wallet, holder.ref, held, names, "v")
        if not creds.verify_presentation(world.registry, full, "v").valid:
            problems.append((i, "full"))
        disclose = rng.sample(names, rng.randint(0, len(names) - 1))
        part = creds.make_presentation(world.registry, holder.wallet, holder.ref, held, disclose, "v")
        raw = part.to_bytes()
        report = creds.verify_presentation_bytes(world.registry, raw, "v")
        if not report.valid or sorted(report.undisclosed) != sorted(set(names) - set(disclose)):
            problems.append((i, "partial"))
        for n in set(names) - set(disclose):
            if claims[n].encode() in raw or claims[n].encode() in held.credential.to_bytes():
                problems.append((i, f"leak {n}"))
        serialized.append(raw)
    invalid = 0
    for _ in range(1000):
        raw = rng.choice(serialized)
        buf = bytearray(raw)
        pos = rng.randrange(len(buf))
        buf[pos] = (buf[pos] + rng.randrange(1, 256)) % 256
        if not creds.verify_presentation_bytes(world.registry, bytes(buf), "v").valid:
            invalid += 1
    elapsed = time.perf_counter() - start
    verdict(
        "Selective disclosure", not problems and invalid == 1000, elapsed, 30,
        f"problems={len(problems)} invalid_mutations={invalid}/1000",
    )


def test_merkle_oracle_equivalence(verdict):
    start = time.perf_counter()
    rng = random.Random(11)
    ok = True
    for n in range(1, 34):
        leaves = [rng.randbytes(32) for _ in range(n)]
        tree = anchor.build_tree(leaves)
        ok &= tree.root == merkle_root_naive(leaves)
        ok &= all(anchor.verify_proof(leaf, anchor.prove(tree, i), tree.root) for i, leaf in enumerate(leaves))

    a, b = rng.randbytes(32), rng.randbytes(32)
    two = anchor.build_tree([a, b])
    # present the concatenated leaf nodes, or their interior hash, as a single leaf
    inner = anchor.leaf_node(a) + anchor.leaf_node(b)
    attack_blocked = not anchor.verify_proof(inner, anchor.InclusionProof(0, ()), two.root)
    attack_blocked &= not anchor.verify_proof(two.root, anchor.InclusionProof(0, ()), two.root)
    four = anchor.build_tree([rng.randbytes(32) for _ in range(4)])
    p0, p1 = four.levels[1]
    attack_blocked &= not anchor.verify_proof(p0, anchor.InclusionProof(0, (anchor.Sibling(p1, "R"),)), four.root)

    world = World(12)
    w = keyring.create_wallet("op")
    w.add("k", keyring.key_from_seed(bytes(32)))
    svc = anchor.AnchorService()
    for i in range(100):
        svc.add_content(f"record-{i}".encode())
    before = sum(1 for _ in world.ledger.transactions())
    receipts = svc.flush(world.ledger, w, "k")
    txs = sum(1 for _ in world.ledger.transactions()) - before
    ok &= len(receipts) == 100 and all(anchor.verify_anchored(f"record-{i}".encode(), r, world.ledger).ok
                                       for i, r in enumerate(receipts))
    elapsed = time.perf_counter() - start
    verdict("Merkle oracle equivalence", ok and attack_blocked and txs == 1, elapsed, None,
            f"attack_blocked={attack_blocked} anchor_txs={txs}")


def _windows(data: bytes, size: int) -> set[bytes]:
    return {data[i : i + size] for i in range(len(data) - size + 1)}


def test_unlinkability_scan(verdict):
    start = time.perf_counter()
    world = World(13)
    a = make_party(world, "person", "hospital")
    b = make_party(world, "person", "university")
    world.registry.update_document(world.registry.resolve(a.did), a.wallet, a.ref)
    world.registry.update_document(world.registry.resolve(b.did), b.wallet, b.ref)
    world.ledger.produce_block()
    master = a.wallet.get("master")
    assert b.wallet.get("master") == master

    def artifacts(party) -> bytes:
        rec = world.ledger.state["dids"][party.did]
        parts = [
            canonical_json(rec),
            world.registry.resolve(party.did).to_bytes(),
            *(canonical_json(tx.to_json()) for tx in world.ledger.transactions() if tx.sender == party.public),
        ]
        return b"\n".join(parts)

    art = {"a": artifacts(a), "b": artifacts(b)}
    pubs = {"a": a.public, "b": b.public}
    secrets = [master.seed, master.public, master.fingerprint]
    problems = []
    window = 4
    # control: each side's own key is visible to the scan, so a clean result is not vacuous
    for side in ("a", "b"):
        if pubs[side].hex().encode() not in art[side]:
            problems.append(f"scan control failed for {side}")
    for side, other in (("a", "b"), ("b", "a")):
        blob = art[side]
        for w in _windows(pubs[other], window):
            if w in blob or w.hex().encode() in blob:
                problems.append(f"{side} contains bytes of {other}'s key")
                break
        for s in secrets:
            for w in _windows(s, window):
                if w in blob or w.hex().encode() in blob:
                    problems.append(f"{side} contains master-derived bytes")
                    break
    elapsed = time.perf_counter() - start
    verdict("Unlinkability scan", not problems, elapsed, None, f"window={window}B problems={problems}")


def test_end_to_end_determinism(verdict, tmp_path, capsys):
    start = time.perf_counter()
    path = harness.bundled_scenarios()["degree-verification"]
    first, second = tmp_path / "one.json", tmp_path / "two.json"
    code1 = cli_main(["run", str(path), "--transcript", str(first)])
    code2 = cli_main(["run", str(path), "--transcript", str(second)])
    capsys.readouterr()
    transcript = harness.Transcript.from_json(json.loads(first.read_bytes()))
    report = harness.lifecycle_check(transcript)
    required = {
        "Master & Sub Key Generation",
        "Identifier Registry",
        "Multiple Registration",
        "Dual Resolution",
        "Selective Content Generation",
        "One-Off Access",
        "Blockchain Anchor",
    }
    covered = required <= transcript.patterns()
    identical = first.read_bytes() == second.read_bytes()
    elapsed = time.perf_counter() - start
    verdict(
        "End-to-end determinism", code1 == 0 and code2 == 0 and identical and report.ok and covered, elapsed, 5,
        f"exit={code1},{code2} identical={identical} violations={len(report.violations)} digest={H(first.read_bytes()).hex()[:16]}",
    )


def test_pattern_coverage_matrix(verdict):
    start = time.perf_counter()
    transcripts = [harness.run_scenario(p) for p in harness.bundled_scenarios().values()]
    matrix = harness.coverage(transcripts)
    missing = [p for p in harness.PATTERNS if not matrix[p]]
    each_nonempty = all(t.patterns() for t in transcripts)
    elapsed = time.perf_counter() - start
    verdict("Pattern coverage matrix", not missing and each_nonempty and len(harness.PATTERNS) == 12, elapsed, None,
            f"covered={12 - len(missing)}/12 missing={missing}")
