"""Exception types shared across forgebench."""


class ForgeBenchError(Exception):
    pass


class ConfigSyntaxError(ForgeBenchError, ValueError):
    """Malformed JSON document."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class SchemaError(ForgeBenchError, ValueError):
    """Document is valid JSON but violates the config schema."""

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class ShapeError(ForgeBenchError, ValueError):
    pass


class GroupError(ForgeBenchError, ValueError):
    pass


class BoundsError(ForgeBenchError, IndexError):
    pass


class OracleError(ForgeBenchError):
    """Numeric failure inside the golden model (non-finite values, bad call)."""

    def __init__(self, message, call_index=None):
        self.call_index = call_index
        prefix = f"calls[{call_index}]: " if call_index is not None else ""
        super().__init__(prefix + message)


class UnsupportedSpec(ForgeBenchError):
    pass


class ValidationError(ForgeBenchError):
    def __init__(self, report):
        self.report = report
        lines = "; ".join(str(d) for d in report.diagnostics)
        super().__init__(f"design failed validation: {lines}")


class ArityError(ForgeBenchError, ValueError):
    pass


class PolicyError(ForgeBenchError, ValueError):
    pass


class FamilyMismatch(ForgeBenchError, ValueError):
    pass


class InvalidAxisValue(ForgeBenchError, ValueError):
    pass


class BackendUnavailable(ForgeBenchError):
    pass


class ToolNotFound(BackendUnavailable):
    pass


class FormatError(ForgeBenchError, ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
