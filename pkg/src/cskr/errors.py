"""Exception types shared across the toolkit."""


class CskrError(Exception):
    """Base class for all toolkit errors."""


class SchemaInvalidError(CskrError):
    """A source schema violates a uniqueness or reference invariant."""


class SubsetParseError(CskrError):
    """Generator output could not be split into schema groups at all."""


class QuerySyntaxError(CskrError):
    """Query text violates the subset grammar; carries a position."""

    def __init__(self, message: str, position: int = -1):
        super().__init__(message if position < 0 else f"{message} (at {position})")
        self.position = position


class UnresolvedReferenceError(CskrError):
    """A query token does not resolve against the given schema."""


class DanglingReferenceError(CskrError):
    """A parsed query references elements absent from the unified schema."""


class CapacityError(CskrError):
    """A skeleton needs more distinct schema elements than the schema has."""


class ComposeError(CskrError):
    """Structure composition failed (bad reply or incompatible inputs)."""


class BackendError(CskrError):
    """Text-generation backend failure."""


class PromptTooLongError(BackendError):
    """Rendered prompt exceeds the configured input limit."""


class OracleError(BackendError):
    """Oracle backend request does not match any known sample."""


class ConfigError(CskrError):
    """Run configuration is invalid or incomplete."""


class RunAborted(CskrError):
    """Stream run aborted; a resumable checkpoint was persisted."""

    def __init__(self, message: str, checkpoint_path: str = ""):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
