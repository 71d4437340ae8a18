"""Exception hierarchy.

Every domain failure is a subclass of :class:`SsiError`; the class name doubles as the
outcome label written into scenario transcripts and HTTP error bodies.
"""

from __future__ import annotations


class SsiError(Exception):
    @property
    def code(self) -> str:
        return type(self).__name__


# ledger
class BadSignature(SsiError): ...
class StaleNonce(SsiError): ...
class UnknownOperation(SsiError): ...
class BadTransaction(SsiError): ...


# keys and wallets
class BadSeedLength(SsiError): ...
class MasterInactive(SsiError): ...
class EmptyLabel(SsiError): ...
class ColdWalletOffline(SsiError): ...
class KeyNotActive(SsiError): ...
class KeyMissing(SsiError): ...
class NotAColdWallet(SsiError): ...
class MasterKeyPolicy(SsiError): ...
class NotAMaster(SsiError): ...
class BadThreshold(SsiError): ...
class NotEnoughShards(SsiError): ...
class MixedSplits(SsiError): ...
class DigestMismatch(SsiError): ...
class BadShard(SsiError): ...


# content store / registry
class NotFound(SsiError): ...
class IntegrityViolation(SsiError): ...
class DuplicateController(SsiError): ...
class DuplicateDid(SsiError): ...
class BadDdo(SsiError): ...
class UnknownDid(SsiError): ...
class RevokedDid(SsiError): ...
class NotController(SsiError): ...
class BadQuorum(SsiError): ...
class UnknownDelegate(SsiError): ...
class NoDelegates(SsiError): ...
class ProposalAlreadyOpen(SsiError): ...
class UnknownProposal(SsiError): ...
class NotADelegate(SsiError): ...
class DuplicateApproval(SsiError): ...
class ProposalClosed(SsiError): ...
class QuorumNotMet(SsiError): ...
class TimelockActive(SsiError): ...
class RecoveryInProgress(SsiError): ...
class SocialPostMissing(SsiError): ...
class SignatureInvalid(SsiError): ...


# credentials
class UnknownIssuer(SsiError): ...
class EmptyClaims(SsiError): ...
class DuplicateClaim(SsiError): ...
class PredicateFalse(SsiError): ...
class UnsupportedPredicate(SsiError): ...
class UnknownAttribute(SsiError): ...
class NotHolder(SsiError): ...
class NotIssuer(SsiError): ...
class UnknownCredential(SsiError): ...
class AlreadyRevoked(SsiError): ...


# share links
class ExpiryInPast(SsiError): ...
class UnknownToken(SsiError): ...
class Expired(SsiError): ...
class Consumed(SsiError): ...
class Revoked(SsiError): ...
class ClockSkew(SsiError): ...


# anchoring
class EmptyBatch(SsiError): ...
class IndexOutOfRange(SsiError): ...


# harness
class ParseError(SsiError): ...
class UnresolvedReference(SsiError): ...
class ExpectationMismatch(SsiError): ...
