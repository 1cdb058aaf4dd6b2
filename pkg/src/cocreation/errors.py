"""Exception hierarchy shared across the engine.

Errors that carry findings (validation reports, policy denials surfaced as
tool results) are not exceptions; only genuinely exceptional paths raise.
"""

from __future__ import annotations


class CocreationError(Exception):
    """Base class for all engine errors."""


# -- catalog -----------------------------------------------------------------

class ParseError(CocreationError):
    """Catalog or scenario document is not well-formed."""


class IntegrityError(CocreationError):
    """A referential or structural invariant is violated.

    Carries the offending id when one exists.
    """

    def __init__(self, message: str, offending_id: str | None = None):
        super().__init__(message)
        self.offending_id = offending_id


class NotFound(CocreationError):
    """A reference did not resolve against the catalog."""

    def __init__(self, reference):
        super().__init__(f"unresolved reference: {reference!r}")
        self.reference = reference


class Ambiguous(CocreationError):
    """An offering name matches multiple tiers and none was specified."""

    def __init__(self, name: str, tiers: list[str]):
        super().__init__(f"{name!r} matches tiers {tiers}; specify one")
        self.name = name
        self.tiers = tiers


class InvalidDuration(CocreationError):
    pass


# -- dialogue ----------------------------------------------------------------

class EmptyIntent(CocreationError):
    pass


class StageError(CocreationError):
    """Operation invoked at a stage that does not permit it."""


class TerminalStage(StageError):
    """Session already reached a terminal stage."""


class InvalidSelection(CocreationError):
    pass


class InvalidDate(CocreationError):
    pass


class MissingParameter(CocreationError):
    """Required order parameters have no value."""

    def __init__(self, names: list[str]):
        super().__init__(f"missing required parameters: {', '.join(names)}")
        self.names = names


class NotConfirmed(CocreationError):
    """Order placement attempted without the explicit confirmation action."""


class NoGroundedLookup(CocreationError):
    """Products were recommended without any catalog lookup in this stage."""


class BackendError(CocreationError):
    """The agent backend failed (transport, timeout, protocol)."""

    def __init__(self, message: str, cause: str = "error"):
        super().__init__(message)
        self.cause = cause


class BackendTimeout(BackendError):
    def __init__(self, message: str = "backend timed out"):
        super().__init__(message, cause="timeout")


class ToolCallingUnsupported(BackendError):
    def __init__(self, message: str = "backend cannot emit tool calls"):
        super().__init__(message, cause="tool-calling-unsupported")


class TransportError(BackendError):
    def __init__(self, message: str):
        super().__init__(message, cause="transport")


# -- gateway -----------------------------------------------------------------

class PolicyDenied(CocreationError):
    """A skill-policy rule denied the action."""

    def __init__(self, rule_id: str, message: str):
        super().__init__(f"denied by {rule_id}: {message}")
        self.rule_id = rule_id


# -- memory ------------------------------------------------------------------

class UnknownCase(CocreationError):
    pass


class AlreadyInitialized(CocreationError):
    pass


class StorageError(CocreationError):
    pass


# -- bus ---------------------------------------------------------------------

class BusClosed(CocreationError):
    pass


class RequestTimeout(CocreationError):
    """No correlated reply arrived within the timeout."""


# -- harness -----------------------------------------------------------------

class EmptyInput(CocreationError):
    pass
