"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: configuration/input problems
exit 1, numerical failures exit 2, provider and storage failures exit 3.
"""


class MemfieldError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MemfieldError):
    """Invalid parameters or configuration (bad rates, CFL violation, weights)."""


class NumericalBlowup(MemfieldError):
    """A field value exceeded the magnitude bound; usually a CFL violation."""


class EmptyText(MemfieldError):
    """Text to embed or inject was empty."""


class ProviderUnavailable(MemfieldError):
    """The remote embedding service failed after retries."""


class ImportanceOutOfRange(MemfieldError):
    """Injection importance outside (0, i_cap]."""


class UnknownMemory(MemfieldError):
    """No record with the requested memory id."""


class EmptyStore(MemfieldError):
    """Retrieval was attempted against a store with no records."""


class EmptyQuery(MemfieldError):
    """Retrieval query text was empty."""


class ClockSkew(MemfieldError):
    """A timestamp went backwards relative to existing state."""


class IoFailure(MemfieldError):
    """Snapshot read/write failed at the OS level."""


class CorruptSnapshot(MemfieldError):
    """Snapshot bytes are inconsistent (bad magic, framing, or checksum)."""


class UnsupportedVersion(MemfieldError):
    """Snapshot format version is not one this build can read."""


class ParseError(MemfieldError):
    """A JSONL input line could not be parsed.

    Carries the 1-based line number for error reporting.
    """

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number
