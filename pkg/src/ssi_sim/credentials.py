"""Credential issuance, selective disclosure and on-ledger revocation.

Three selective-disclosure schemes are supported:

* ``Atomic``: one credential per claim, so the holder hands over only what is asked.
* ``Hashed``: each attribute is committed as ``H(name || 0x1F || value || 0x1F || nonce)``;
  a presentation opens a chosen subset.  Low-entropy values are only as hidden as
  their 16-byte nonce keeps them, since the nonce (not the value space) does the hiding.
* ``Predicate``: the issuer evaluates ``<name><op><int>`` against a value it
  attests and signs only the outcome.  This trusts the issuer; it is not a
  zero-knowledge proof.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from . import keyring
from .encoding import H, canonical_json, encode_fields, from_hex
from .errors import (
    AlreadyRevoked,
    DuplicateClaim,
    EmptyClaims,
    NotHolder,
    NotIssuer,
    PredicateFalse,
    SsiError,
    UnknownAttribute,
    UnknownCredential,
    UnknownDid,
    UnknownIssuer,
    UnsupportedPredicate,
)
from .ledger import Transaction
from .registry import DidState, Registry

NONCE_SIZE = 16
SERIAL_SIZE = 16
SEP = b"\x1f"
BLOCKS_PER_YEAR = 5_256_000

_PREDICATE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(>=|<=|==)(-?[0-9]+)$")


class Scheme(str, Enum):
    PLAIN = "Plain"
    ATOMIC = "Atomic"
    HASHED = "Hashed"
    PREDICATE = "Predicate"


@dataclass(frozen=True)
class Claim:
    name: str
    value: str


def salted_digest(name: str, value: str, nonce: bytes) -> bytes:
    return H(name.encode("utf-8") + SEP + value.encode("utf-8") + SEP + nonce)


def age_from_dob(dob_height: int, at_height: int) -> int:
    """Whole years between two heights under the fixed blocks-per-year convention."""
    return (at_height - dob_height) // BLOCKS_PER_YEAR


@dataclass(frozen=True)
class Credential:
    issuer_did: str
    holder_did: str
    scheme: Scheme
    body: tuple[tuple[str, str], ...]  # (name, value) or, for Hashed, (name, digest hex)
    issued_at: int
    serial: str
    issuer_signature: bytes = b""

    def body_json(self) -> dict:
        key = "attributes" if self.scheme is Scheme.HASHED else "claims"
        inner = "digest" if self.scheme is Scheme.HASHED else "value"
        return {
            "issuer": self.issuer_did,
            "holder": self.holder_did,
            "scheme": self.scheme.value,
            "issued_at": self.issued_at,
            "serial": self.serial,
            key: [{"name": n, inner: v} for n, v in self.body],
        }

    @property
    def cred_id(self) -> str:
        return H(canonical_json(self.body_json())).hex()

    def signing_bytes(self) -> bytes:
        return encode_fields("ssi-sim/credential", canonical_json(self.body_json()))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.body]

    def to_json(self) -> dict:
        out = self.body_json()
        out["cred_id"] = self.cred_id
        out["issuer_signature"] = self.issuer_signature.hex()
        return out

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_json())

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> Credential:
        scheme = Scheme(data["scheme"])
        key, inner = ("attributes", "digest") if scheme is Scheme.HASHED else ("claims", "value")
        expected = {"issuer", "holder", "scheme", "issued_at", "serial", key, "cred_id", "issuer_signature"}
        if set(data) != expected:
            raise ValueError("unexpected credential fields")
        body = []
        for item in data[key]:
            if set(item) != {"name", inner}:
                raise ValueError("unexpected claim fields")
            body.append((str(item["name"]), str(item[inner])))
        if not isinstance(data["issued_at"], int):
            raise ValueError("issued_at must be an integer")
        cred = cls(
            issuer_did=str(data["issuer"]),
            holder_did=str(data["holder"]),
            scheme=scheme,
            body=tuple(body),
            issued_at=data["issued_at"],
            serial=str(data["serial"]),
            issuer_signature=from_hex(data["issuer_signature"]),
        )
        if cred.cred_id != data["cred_id"]:
            raise ValueError("cred_id does not match credential body")
        return cred


@dataclass(frozen=True)
class HeldCredential:
    """A credential plus the private openings (value, nonce) the holder needs for Hashed disclosure."""

    credential: Credential
    openings: Mapping[str, tuple[str, bytes]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "credential": self.credential.to_json(),
            "openings": {n: {"value": v, "nonce": nc.hex()} for n, (v, nc) in sorted(self.openings.items())},
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> HeldCredential:
        openings = {n: (o["value"], from_hex(o["nonce"], NONCE_SIZE)) for n, o in data.get("openings", {}).items()}
        return cls(Credential.from_json(data["credential"]), openings)


def _check_parties(registry: Registry, wallet: keyring.Wallet, key_ref: str, issuer_did: str, holder_did: str) -> None:
    try:
        rec = registry.record(issuer_did)
    except UnknownDid:
        raise UnknownIssuer(f"issuer {issuer_did} is not registered") from None
    if rec["state"] == DidState.REVOKED:
        raise UnknownIssuer(f"issuer {issuer_did} is revoked")
    if wallet.public(key_ref).hex() != rec["controller"]:
        raise NotIssuer("signing key does not control the issuer DID")
    registry.record(holder_did, allow_revoked=False)


def _sign(cred: Credential, wallet: keyring.Wallet, key_ref: str) -> Credential:
    sig = keyring.sign(wallet, key_ref, cred.signing_bytes())
    return Credential(cred.issuer_did, cred.holder_did, cred.scheme, cred.body, cred.issued_at, cred.serial, sig)


def _normalize_claims(claims: Iterable[Claim] | Mapping[str, str]) -> list[Claim]:
    if isinstance(claims, Mapping):
        claims = [Claim(k, v) for k, v in claims.items()]
    claims = [Claim(str(c.name), str(c.value)) for c in claims]
    if not claims:
        raise EmptyClaims("at least one claim is required")
    names = [c.name for c in claims]
    if any(not n for n in names):
        raise EmptyClaims("claim names must be non-empty")
    if len(set(names)) != len(names):
        raise DuplicateClaim("claim names must be unique within a credential")
    return claims


def issue(
    registry: Registry,
    issuer_wallet: keyring.Wallet,
    key_ref: str,
    issuer_did: str,
    holder_did: str,
    claims: Iterable[Claim] | Mapping[str, str],
    scheme: Scheme | str,
    rng: random.Random,
) -> HeldCredential | list[HeldCredential]:
    """Issue a credential; ``Atomic`` returns one credential per claim."""
    scheme = Scheme(scheme)
    claims = _normalize_claims(claims)
    _check_parties(registry, issuer_wallet, key_ref, issuer_did, holder_did)
    height = registry.ledger.current_height()

    def build(body: tuple, s: Scheme) -> Credential:
        return _sign(Credential(issuer_did, holder_did, s, body, height, rng.randbytes(SERIAL_SIZE).hex()), issuer_wallet, key_ref)

    if scheme is Scheme.ATOMIC:
        return [HeldCredential(build(((c.name, c.value),), scheme)) for c in claims]
    if scheme is Scheme.HASHED:
        openings: dict[str, tuple[str, bytes]] = {}
        body = []
        for c in claims:
            nonce = rng.randbytes(NONCE_SIZE)
            while any(nonce == o[1] for o in openings.values()):
                nonce = rng.randbytes(NONCE_SIZE)
            openings[c.name] = (c.value, nonce)
            body.append((c.name, salted_digest(c.name, c.value, nonce).hex()))
        return HeldCredential(build(tuple(body), scheme), openings)
    if scheme is Scheme.PREDICATE:
        raise UnsupportedPredicate("use issue_predicate for predicate credentials")
    return HeldCredential(build(tuple((c.name, c.value) for c in claims), scheme))


def parse_predicate(predicate: str) -> tuple[str, str, int]:
    m = _PREDICATE.match(predicate)
    if not m:
        raise UnsupportedPredicate(f"predicate {predicate!r} is not <name><op><integer> with op in >=, <=, ==")
    return m.group(1), m.group(2), int(m.group(3))


def evaluate_predicate(predicate: str, value: int) -> bool:
    _, op, bound = parse_predicate(predicate)
    if op == ">=":
        return value >= bound
    if op == "<=":
        return value <= bound
    return value == bound


def issue_predicate(
    registry: Registry,
    issuer_wallet: keyring.Wallet,
    key_ref: str,
    issuer_did: str,
    holder_did: str,
    source_claim: Claim,
    predicate: str,
    rng: random.Random,
) -> HeldCredential:
    name, _, _ = parse_predicate(predicate)
    if name != source_claim.name:
        raise UnsupportedPredicate(f"predicate is about {name!r} but the source claim is {source_claim.name!r}")
    try:
        value = int(source_claim.value)
    except ValueError:
        raise UnsupportedPredicate(f"source value for {name!r} is not an integer") from None
    if not evaluate_predicate(predicate, value):
        raise PredicateFalse(f"issuer will not attest {predicate}")
    _check_parties(registry, issuer_wallet, key_ref, issuer_did, holder_did)
    cred = Credential(
        issuer_did,
        holder_did,
        Scheme.PREDICATE,
        ((predicate, "true"),),
        registry.ledger.current_height(),
        rng.randbytes(SERIAL_SIZE).hex(),
    )
    return HeldCredential(_sign(cred, issuer_wallet, key_ref))


# -- presentations ------------------------------------------------------------


@dataclass(frozen=True)
class Presentation:
    credential: Credential
    disclosed: tuple[tuple[str, str, bytes], ...]  # (name, value, nonce)
    audience: str
    holder_signature: bytes = b""

    def disclosed_json(self) -> list[dict]:
        return [{"name": n, "value": v, "nonce": nc.hex()} for n, v, nc in self.disclosed]

    def signing_bytes(self) -> bytes:
        return encode_fields(
            "ssi-sim/presentation",
            H(self.credential.to_bytes()),
            canonical_json(self.disclosed_json()),
            self.audience,
        )

    def to_json(self) -> dict:
        return {
            "credential": self.credential.to_json(),
            "disclosed": self.disclosed_json(),
            "audience": self.audience,
            "holder_signature": self.holder_signature.hex(),
        }

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_json())

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> Presentation:
        if set(data) != {"credential", "disclosed", "audience", "holder_signature"}:
            raise ValueError("unexpected presentation fields")
        disclosed = []
        for d in data["disclosed"]:
            if set(d) != {"name", "value", "nonce"}:
                raise ValueError("unexpected disclosure fields")
            disclosed.append((str(d["name"]), str(d["value"]), from_hex(d["nonce"], NONCE_SIZE)))
        return cls(
            Credential.from_json(data["credential"]),
            tuple(disclosed),
            str(data["audience"]),
            from_hex(data["holder_signature"]),
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> Presentation:
        data = json.loads(raw)
        if canonical_json(data) != raw:
            raise ValueError("presentation is not in canonical form")
        return cls.from_json(data)


def make_presentation(
    registry: Registry,
    holder_wallet: keyring.Wallet,
    key_ref: str,
    held: HeldCredential,
    disclose: Iterable[str],
    audience: str,
) -> Presentation:
    cred = held.credential
    disclose = list(dict.fromkeys(disclose))
    unknown = [n for n in disclose if n not in cred.names]
    if unknown:
        raise UnknownAttribute(f"credential has no attribute(s) {', '.join(unknown)}")
    holder_rec = registry.record(cred.holder_did, allow_revoked=False)
    if holder_wallet.public(key_ref).hex() != holder_rec["controller"]:
        raise NotHolder("signing key does not control the holder DID")
    disclosed: tuple = ()
    if cred.scheme is Scheme.HASHED:
        order = [n for n in cred.names if n in disclose]
        try:
            disclosed = tuple((n, held.openings[n][0], held.openings[n][1]) for n in order)
        except KeyError as exc:
            raise UnknownAttribute(f"no opening held for {exc.args[0]!r}") from None
    pres = Presentation(cred, disclosed, audience)
    sig = keyring.sign(holder_wallet, key_ref, pres.signing_bytes())
    return Presentation(cred, disclosed, audience, sig)


@dataclass
class VerificationReport:
    checks: dict[str, bool] = field(default_factory=dict)
    disclosed: dict[str, str] = field(default_factory=dict)
    undisclosed: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return bool(self.checks) and all(self.checks.values()) and not self.errors

    def __bool__(self) -> bool:
        return self.valid

    def failures(self) -> list[str]:
        return [k for k, ok in self.checks.items() if not ok] + self.errors

    def to_json(self) -> dict:
        return {
            "valid": self.valid,
            "checks": self.checks,
            "disclosed": self.disclosed,
            "undisclosed": self.undisclosed,
            "errors": self.errors,
        }


def is_revoked(registry: Registry, cred: Credential) -> bool:
    return cred.issuer_did in registry.ledger.state.get("revocations", {}).get(cred.cred_id, {})


def verify_presentation(registry: Registry, presentation: Presentation, audience: str) -> VerificationReport:
    report = VerificationReport()
    cred = presentation.credential
    checks = report.checks

    try:
        issuer_key = registry.key_at(cred.issuer_did, cred.issued_at)
    except SsiError as exc:
        issuer_key = None
        report.errors.append(f"issuer: {exc.code}")
    checks["issuer_signature"] = issuer_key is not None and keyring.verify(
        issuer_key, cred.signing_bytes(), cred.issuer_signature
    )

    try:
        holder_key = registry.controller(cred.holder_did)
    except SsiError as exc:
        holder_key = None
        report.errors.append(f"holder: {exc.code}")
    checks["holder_signature"] = holder_key is not None and keyring.verify(
        holder_key, presentation.signing_bytes(), presentation.holder_signature
    )
    checks["audience"] = presentation.audience == audience

    if cred.scheme is Scheme.HASHED:
        digests = dict(cred.body)
        names = [n for n, _, _ in presentation.disclosed]
        checks["disclosure_set"] = len(set(names)) == len(names) and set(names) <= set(digests)
        for name, value, nonce in presentation.disclosed:
            ok = digests.get(name) == salted_digest(name, value, nonce).hex()
            checks[f"digest:{name}"] = ok
            if ok:
                report.disclosed[name] = value
        report.undisclosed = [n for n in cred.names if n not in set(names)]
    else:
        checks["disclosure_set"] = not presentation.disclosed
        report.disclosed = dict(cred.body)

    checks["not_revoked"] = not is_revoked(registry, cred)
    return report


def verify_presentation_bytes(registry: Registry, raw: bytes, audience: str) -> VerificationReport:
    """Verify serialized presentation bytes; anything that fails to parse canonically is invalid."""
    try:
        pres = Presentation.from_bytes(raw)
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        report = VerificationReport()
        report.checks["structure"] = False
        report.errors.append(f"parse: {exc}")
        return report
    return verify_presentation(registry, pres, audience)


# -- revocation ---------------------------------------------------------------


def _h_revoke(state: dict, tx: Transaction, height: int) -> None:
    p = tx.payload
    rec = state.get("dids", {}).get(p["issuer"])
    if rec is None or rec["controller"] != tx.sender.hex():
        raise NotIssuer("only the issuing DID's controller may revoke")
    entries = state.setdefault("revocations", {}).setdefault(p["cred_id"], {})
    if p["issuer"] in entries:
        raise AlreadyRevoked(f"credential {p['cred_id'][:12]} already revoked")
    entries[p["issuer"]] = {"revoked_at": height, "signature": tx.signature.hex()}


HANDLERS = {"cred.revoke": _h_revoke}


def revoke(
    registry: Registry,
    issuer_wallet: keyring.Wallet,
    key_ref: str,
    cred_id: str,
    *,
    issuer_did: str,
    issued: Mapping[str, Any] | None = None,
) -> bytes:
    """Record a revocation entry on the ledger.

    ``issued`` is the issuer's own book of credentials it has issued; when given,
    unknown ids are refused before anything is submitted.
    """
    try:
        rec = registry.record(issuer_did, pending=True)
    except UnknownDid:
        raise NotIssuer(f"{issuer_did} is not a registered issuer") from None
    if issuer_wallet.public(key_ref).hex() != rec["controller"]:
        raise NotIssuer("signing key does not control the issuer DID")
    if issued is not None and cred_id not in issued:
        raise UnknownCredential(f"{issuer_did} never issued {cred_id}")
    return registry.ledger.submit(issuer_wallet, key_ref, {"op": "cred.revoke", "cred_id": cred_id, "issuer": issuer_did})
