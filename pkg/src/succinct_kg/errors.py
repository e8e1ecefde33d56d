"""Exception hierarchy shared by every layer.

Each exception carries the process exit code the CLI maps it to.
"""


class SuccinctKGError(Exception):
    exit_code = 1


class FormatError(SuccinctKGError):
    """Corrupt or truncated binary payload."""

    exit_code = 3


class ParseError(SuccinctKGError):
    """Malformed textual input, with an optional 1-based line/column."""

    exit_code = 1

    def __init__(self, message, line=None, column=None, source=None):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"col {column}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class UnsupportedFeatureError(SuccinctKGError):
    exit_code = 2

    def __init__(self, feature, detail=""):
        self.feature = feature
        msg = f"unsupported feature: {feature}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class EncodingError(SuccinctKGError):
    """Ontology cannot be prefix-encoded (cycle)."""

    exit_code = 3


class CapacityError(EncodingError):
    """Hierarchy needs identifiers wider than 64 bits."""


class LookupMissError(SuccinctKGError, KeyError):
    exit_code = 3

    def __str__(self):
        return Exception.__str__(self)


class IntegrityError(SuccinctKGError):
    exit_code = 3


class KindError(SuccinctKGError, TypeError):
    exit_code = 3
