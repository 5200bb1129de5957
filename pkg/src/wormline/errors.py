"""Exception hierarchy shared by all wormline modules."""


class WormlineError(Exception):
    """Base class for all errors raised by this package."""


class InputContractError(WormlineError):
    """An argument violates a documented precondition or invariant."""


class FormatError(InputContractError):
    """A file is unreadable or not in a supported format."""
