"""Exception types shared across the package.

Domain errors map to CLI exit code 1, usage/config errors to exit code 2.
"""


class SegsrError(Exception):
    """Base class for all package-domain errors."""


class TaxonomyError(SegsrError):
    """Malformed taxonomy file or out-of-range class index."""


class ValidationError(SegsrError):
    """Data violates a declared invariant (label range, dimensions, ...)."""


class ShapeError(SegsrError):
    """Array shapes incompatible with the requested operation."""


class BackendError(SegsrError):
    """A pluggable backend (segmenter, encoder, plugin) failed.

    Carries the backend name so callers can report which plugin broke.
    """

    def __init__(self, backend: str, message: str):
        super().__init__(f"[{backend}] {message}")
        self.backend = backend


class ConfigError(SegsrError):
    """Invalid run configuration (unknown key, bad value, missing file)."""


class UsageError(SegsrError):
    """Command invoked incorrectly (bad arguments, empty input dir)."""
