"""Shared exception types."""


class DataError(Exception):
    """Fatal problem with input data or files (bad schema, missing file,
    out-of-range values, malformed line in strict mode)."""
