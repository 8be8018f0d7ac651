"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DdosMLError(Exception):
    exit_code = 1


class ArgumentError(DdosMLError, ValueError):
    exit_code = 2


class SchemaError(DdosMLError, ValueError):
    exit_code = 3


class RowError(SchemaError):
    """A data row that cannot be read; ``line`` is the 1-based physical line."""

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ColumnError(SchemaError):
    def __init__(self, column, message):
        super().__init__(f"column {column!r}: {message}")
        self.column = column


class UnknownLabelError(SchemaError):
    def __init__(self, text, row):
        super().__init__(f"unknown label {text!r} at row {row}")
        self.text = text
        self.row = row


class FormatVersionError(SchemaError):
    pass


class UndefinedMetricError(DdosMLError, ValueError):
    exit_code = 5


class DegenerateROCError(UndefinedMetricError):
    pass


class NotEnoughSplitsError(DdosMLError, ValueError):
    exit_code = 5
