"""Exception hierarchy shared by all pipeline stages.

Each class carries the process exit code the CLI reports for it.
"""


class PipelineError(Exception):
    exit_code = 1


class DomainError(PipelineError, ValueError):
    """Coordinate outside the domain of a mapping."""

    exit_code = 4


class ParameterError(PipelineError, ValueError):
    exit_code = 2


class ShapeError(PipelineError, ValueError):
    exit_code = 4


class ContractViolation(PipelineError, RuntimeError):
    """A pluggable component returned something outside its contract."""

    exit_code = 4


class ManifestParseError(PipelineError, ValueError):
    exit_code = 5

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field


class ValidationFailure(PipelineError):
    exit_code = 5


class InputIOError(PipelineError, OSError):
    exit_code = 3
