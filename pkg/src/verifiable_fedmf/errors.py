"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class DimensionMismatch(ValueError):
    """Vectors or matrices with incompatible shapes were combined."""


class SumBoundViolation(ValueError):
    """The fixed-point ring is too small for the requested aggregate."""

    def __init__(self, margin: float, message: str | None = None):
        self.margin = margin
        super().__init__(message or f"sum bound violated by {-margin:.6g} ring units")


class InvalidPublicKey(ValueError):
    """A received public key is not a valid non-identity group element."""


class ProtocolError(Exception):
    """Base class for anything that makes an actor abort an iteration."""


class ParticipantMismatch(ProtocolError):
    """A barrier saw a missing, duplicate, or unexpected participant."""


class MissingKey(ProtocolError):
    def __init__(self, peer: int):
        self.peer = peer
        super().__init__(f"no shared key for peer {peer}")


class PhaseError(ProtocolError):
    """A well-formed message arrived outside the phase or iteration that accepts it."""


class MalformedMessage(ProtocolError):
    """Bytes on the wire do not parse as the message they claim to be."""


class UnknownRecipient(ProtocolError):
    pass


class VerificationFailure(ProtocolError):
    """An honest user output the abort symbol.

    ``check`` is ``"CommitmentCheck"`` or ``"AggregateCheck"``.  When raised by
    the iteration driver, ``failures`` maps every user that aborted to its own
    failure record; the top-level fields mirror the lowest-indexed one.
    """

    COMMITMENT = "CommitmentCheck"
    AGGREGATE = "AggregateCheck"

    def __init__(self, check: str, item: int, iteration: int, user: int | None = None):
        self.check = check
        self.item = item
        self.iteration = iteration
        self.user = user
        self.failures: dict[int, VerificationFailure] = {}
        who = "" if user is None else f"user {user}: "
        super().__init__(f"{who}{check} failed for item {item} at iteration {iteration}")
