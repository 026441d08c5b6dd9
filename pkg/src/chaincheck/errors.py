"""Exception types shared across the package."""


class ChaincheckError(Exception):
    """Base class for all package-specific errors."""


class MalformedJointAction(ChaincheckError):
    """A joint action is structurally inconsistent with the current state."""

    def __init__(self, message: str, round_no: int | None = None):
        super().__init__(message if round_no is None else f"round {round_no}: {message}")
        self.round_no = round_no


class AdversaryExhausted(ChaincheckError):
    """The adversary cannot satisfy its own constraints (crash budget, plans)."""


class PendingOperation(ChaincheckError):
    """An operation that must be completed is still pending."""


class ConfigMismatch(ChaincheckError):
    """Two runs that must share a system configuration do not."""


class NotEquivalent(ChaincheckError):
    """Node correspondence was requested for runs that are not locally equivalent."""


class ValidationFailure(ChaincheckError):
    """A constructed run failed its own validity or equivalence checks."""

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class PreconditionFailed(ChaincheckError):
    """A transformation precondition does not hold for the given inputs."""


class ProtocolViolation(ChaincheckError):
    """A run contains operation events that no protocol should produce."""


class HistoryTooLarge(ChaincheckError):
    """The extracted history exceeds the exhaustive-search bound."""


class ConfigError(ChaincheckError):
    """A protocol cannot be instantiated for the given system configuration."""


class ParseError(ChaincheckError):
    """A scenario or trace document cannot be parsed."""

    def __init__(self, message: str, path: str | None = None, field: str | None = None):
        loc = "".join(p for p in (path and f"{path}: ", field and f"field {field!r}: ") if p)
        super().__init__(loc + message)
        self.path = path
        self.field = field


class ConstraintError(ChaincheckError):
    """A scenario violates a structural bound (crash budget, pending exclusivity)."""
