"""Exception hierarchy.

Each family carries the process exit code the CLI reports for it, so the
command layer never needs a lookup table of its own.
"""


class AuditError(Exception):
    exit_code = 1


class UsageError(AuditError):
    exit_code = 64


class NetworkError(AuditError):
    exit_code = 2


class UnreachableHost(NetworkError):
    pass


class Timeout(NetworkError):
    pass


class ServiceUnavailable(NetworkError):
    pass


class AccessDenied(NetworkError):
    pass


class MalformedResponse(NetworkError):
    pass


class BackendUnavailable(NetworkError):
    pass


class StorageError(AuditError):
    exit_code = 3


class DataError(AuditError):
    exit_code = 4


class SchemaViolation(DataError):
    def __init__(self, row, column, message):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: {message}")


class EmptyDataset(DataError):
    pass


class DegenerateSplit(DataError):
    pass


class TooFewRows(DataError):
    pass


class TooFewRowsPerClass(DataError):
    pass


class SingleClassInput(DataError):
    pass


class RejectedRedRange(DataError):
    pass


class OutOfRange(DataError):
    pass


class LengthMismatch(DataError):
    pass


class UnknownLabel(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class MissingFile(DataError):
    pass


class UndecodableImage(DataError):
    pass


class ShapeMismatch(AuditError):
    pass


class ModelError(AuditError):
    exit_code = 5
