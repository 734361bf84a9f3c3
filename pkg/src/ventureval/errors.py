"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: usage problems (bad flags, missing
inputs) exit 2, DataError exits 3, TransportError/ProtocolError exit 4.
"""


class DataError(Exception):
    """Input data violates a contract (malformed rows, empty classes, ...)."""


class TransportError(Exception):
    """An HTTP request failed after exhausting retries, or was non-retryable."""

    def __init__(self, message, attempts=None):
        super().__init__(message)
        self.attempts = list(attempts or [])


class ProtocolError(Exception):
    """The remote endpoint answered, but not in the expected wire format."""
