"""Time-constrained and one-off share links over presentations.

All link state lives behind one lock, so each token's transitions are
linearizable; a one-off link is marked Consumed before its content is released.
Content is kept as an AES-GCM encrypted copy of the presentation.
"""

from __future__ import annotations

import base64
import random
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Union

from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import keyring
from .credentials import Presentation
from .encoding import H, encode_fields
from .errors import ClockSkew, Consumed, Expired, ExpiryInPast, NotHolder, Revoked, SsiError, UnknownToken

TOKEN_SIZE = 16


class LinkState(str, Enum):
    ACTIVE = "Active"
    EXPIRED = "Expired"
    CONSUMED = "Consumed"
    REVOKED = "Revoked"


class Outcome(str, Enum):
    SUCCESS = "Success"
    UNKNOWN_TOKEN = "UnknownToken"
    EXPIRED = "Expired"
    CONSUMED = "Consumed"
    REVOKED = "Revoked"


_DENIAL = {
    LinkState.EXPIRED: (Outcome.EXPIRED, Expired),
    LinkState.CONSUMED: (Outcome.CONSUMED, Consumed),
    LinkState.REVOKED: (Outcome.REVOKED, Revoked),
}


@dataclass(frozen=True)
class TimeWindow:
    expires_at: int


@dataclass(frozen=True)
class OneOff:
    pass


Policy = Union[TimeWindow, OneOff]


def policy_to_json(policy: Policy) -> dict:
    if isinstance(policy, TimeWindow):
        return {"kind": "time_window", "expires_at": policy.expires_at}
    return {"kind": "one_off"}


def policy_from_json(data: dict) -> Policy:
    if data.get("kind") == "time_window":
        return TimeWindow(int(data["expires_at"]))
    if data.get("kind") == "one_off":
        return OneOff()
    raise ValueError(f"unknown link policy {data!r}")


@dataclass
class ShareLink:
    token: str
    policy: Policy
    created_at: int
    holder_did: str
    target_digest: str
    state: LinkState = LinkState.ACTIVE

    def to_json(self) -> dict:
        return {
            "token": self.token,
            "policy": policy_to_json(self.policy),
            "created_at": self.created_at,
            "holder_did": self.holder_did,
            "target_digest": self.target_digest,
            "state": self.state.value,
        }


@dataclass(frozen=True)
class AccessEntry:
    token: str
    height: int
    outcome: Outcome


class AccessLog:
    """Append-only record of every access attempt."""

    def __init__(self) -> None:
        self._entries: list[AccessEntry] = []
        self._lock = threading.Lock()

    def append(self, entry: AccessEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    @property
    def entries(self) -> tuple[AccessEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def successes(self, token: str | None = None) -> int:
        return sum(1 for e in self.entries if e.outcome is Outcome.SUCCESS and (token is None or e.token == token))


def revoke_message(token: str) -> bytes:
    return encode_fields("ssi-sim/link-revoke", token)


@dataclass
class _Record:
    link: ShareLink
    nonce: bytes | None
    ciphertext: bytes | None


class ShareService:
    def __init__(
        self,
        rng: random.Random,
        *,
        clock: Callable[[], int] | None = None,
        holder_key: Callable[[str], bytes] | None = None,
        key: bytes | None = None,
    ):
        self._rng = rng
        self._clock = clock
        self._holder_key = holder_key
        self.key = key if key is not None else rng.randbytes(32)
        self._aead = AESGCM(self.key)
        self._links: dict[str, _Record] = {}
        self._lock = threading.Lock()
        self.log = AccessLog()

    def _now(self, now: int | None) -> int:
        if now is not None:
            return now
        if self._clock is None:
            raise ValueError("no clock configured; pass now explicitly")
        return self._clock()

    def create_link(self, presentation: Presentation, policy: Policy, now: int | None = None) -> ShareLink:
        now = self._now(now)
        if isinstance(policy, TimeWindow) and policy.expires_at <= now:
            raise ExpiryInPast(f"expires_at {policy.expires_at} is not after current height {now}")
        content = presentation.to_bytes()
        with self._lock:
            token = base64.urlsafe_b64encode(self._rng.randbytes(TOKEN_SIZE)).decode().rstrip("=")
            while token in self._links:
                token = base64.urlsafe_b64encode(self._rng.randbytes(TOKEN_SIZE)).decode().rstrip("=")
            nonce = self._rng.randbytes(12)
            link = ShareLink(token, policy, now, presentation.credential.holder_did, H(content).hex())
            self._links[token] = _Record(link, nonce, self._aead.encrypt(nonce, content, token.encode()))
        return link

    def link(self, token: str) -> ShareLink:
        with self._lock:
            rec = self._links.get(token)
            if rec is None:
                raise UnknownToken(f"unknown token {token}")
            return ShareLink(**{**rec.link.__dict__})

    def links(self) -> list[ShareLink]:
        with self._lock:
            return [ShareLink(**{**r.link.__dict__}) for r in self._links.values()]

    @staticmethod
    def _expire_if_due(link: ShareLink, now: int) -> None:
        if link.state is LinkState.ACTIVE and isinstance(link.policy, TimeWindow) and now >= link.policy.expires_at:
            link.state = LinkState.EXPIRED

    def access(self, token: str, now: int | None = None) -> Presentation:
        now = self._now(now)
        with self._lock:
            rec = self._links.get(token)
            if rec is None:
                self.log.append(AccessEntry(token, now, Outcome.UNKNOWN_TOKEN))
                raise UnknownToken(f"unknown token {token}")
            link = rec.link
            if now < link.created_at:
                raise ClockSkew(f"height {now} precedes link creation at {link.created_at}")
            self._expire_if_due(link, now)
            if link.state is not LinkState.ACTIVE:
                outcome, exc = _DENIAL[link.state]
                self.log.append(AccessEntry(token, now, outcome))
                raise exc(f"link is {link.state.value}")
            if isinstance(link.policy, OneOff):
                link.state = LinkState.CONSUMED
            self.log.append(AccessEntry(token, now, Outcome.SUCCESS))
            nonce, ciphertext = rec.nonce, rec.ciphertext
        assert nonce is not None and ciphertext is not None
        return Presentation.from_bytes(self._aead.decrypt(nonce, ciphertext, token.encode()))

    def revoke_link(self, token: str, holder_signature: bytes) -> None:
        with self._lock:
            rec = self._links.get(token)
            if rec is None:
                raise UnknownToken(f"unknown token {token}")
            holder = rec.link.holder_did
        if self._holder_key is None:
            raise NotHolder("no holder key resolver configured")
        try:
            pub = self._holder_key(holder)
        except SsiError:
            raise NotHolder(f"cannot resolve holder {holder}") from None
        if not keyring.verify(pub, revoke_message(token), holder_signature):
            raise NotHolder("signature does not verify under the presentation holder's key")
        with self._lock:
            if rec.link.state is LinkState.ACTIVE:
                rec.link.state = LinkState.REVOKED

    def purge_expired(self, now: int | None = None) -> int:
        """Drop stored content of every link that can no longer be served; tombstones stay."""
        now = self._now(now)
        purged = 0
        with self._lock:
            for rec in self._links.values():
                self._expire_if_due(rec.link, now)
                if rec.link.state is not LinkState.ACTIVE and rec.ciphertext is not None:
                    rec.nonce = rec.ciphertext = None
                    purged += 1
        return purged

    def has_content(self, token: str) -> bool:
        with self._lock:
            rec = self._links.get(token)
            return rec is not None and rec.ciphertext is not None

    # persistence
    def to_json(self) -> dict:
        with self._lock:
            return {
                "key": self.key.hex(),
                "links": [
                    {
                        **r.link.to_json(),
                        "nonce": r.nonce.hex() if r.nonce else None,
                        "ciphertext": r.ciphertext.hex() if r.ciphertext else None,
                    }
                    for r in self._links.values()
                ],
                "log": [{"token": e.token, "height": e.height, "outcome": e.outcome.value} for e in self.log.entries],
            }

    @classmethod
    def from_json(cls, data: dict, rng: random.Random, **kwargs) -> ShareService:
        svc = cls(rng, key=bytes.fromhex(data["key"]), **kwargs)
        for item in data.get("links", []):
            link = ShareLink(
                token=item["token"],
                policy=policy_from_json(item["policy"]),
                created_at=int(item["created_at"]),
                holder_did=item["holder_did"],
                target_digest=item["target_digest"],
                state=LinkState(item["state"]),
            )
            nonce = bytes.fromhex(item["nonce"]) if item.get("nonce") else None
            ct = bytes.fromhex(item["ciphertext"]) if item.get("ciphertext") else None
            svc._links[link.token] = _Record(link, nonce, ct)
        for e in data.get("log", []):
            svc.log.append(AccessEntry(e["token"], int(e["height"]), Outcome(e["outcome"])))
        return svc


def create_link(service: ShareService, presentation: Presentation, policy: Policy, now: int | None = None) -> ShareLink:
    return service.create_link(presentation, policy, now)


def access(service: ShareService, token: str, now: int | None = None) -> Presentation:
    return service.access(token, now)
