"""Exception types shared across the package."""


class PrefoptError(Exception):
    """Base class for package errors."""


class InvalidInputError(PrefoptError):
    """Caller passed data violating a precondition (bad shapes, ranges...)."""


class InvalidStateError(PrefoptError):
    """Operation not valid for the object's current state."""


class ConfigurationError(PrefoptError):
    """Inconsistent or incomplete configuration."""


class NumericalError(PrefoptError):
    """A numerical routine failed beyond recovery.

    ``term`` names the offending quantity when known.
    """

    def __init__(self, message, term=None):
        super().__init__(message if term is None else f"{message} (term: {term})")
        self.term = term


class DegeneratePlaneError(PrefoptError):
    """All three plane-defining points coincide; caller must re-sample."""


class StoreError(PrefoptError):
    """Model store I/O or integrity failure."""
