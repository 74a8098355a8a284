"""Exception hierarchy shared by all modules."""


class StatDagError(Exception):
    """Base class for every error raised by this package."""


class ConstantComponent(StatDagError, ValueError):
    """A series component has zero variance after detrending."""


class DimensionMismatch(StatDagError, ValueError):
    """Array shapes are inconsistent with each other."""


class InvalidBasis(StatDagError, ValueError):
    """B-spline basis size is too small for the requested degree."""


class OutOfDomain(StatDagError, ValueError):
    """A frequency lies outside [-pi, pi]."""


class SingularCovariance(StatDagError, FloatingPointError):
    """A Whittle covariance has a nonpositive variance entry."""


class NumericalFailure(StatDagError, FloatingPointError):
    """A conditional precision matrix is not positive definite."""


class EmptyTruncation(StatDagError, ValueError):
    """Stick-breaking truncation level is too small."""


class OptimizerDivergence(StatDagError, RuntimeError):
    """The penalized solver failed to decrease its objective."""


class NonFiniteObjective(StatDagError, FloatingPointError):
    """The penalized objective evaluated to inf or nan."""


class SingularSystem(StatDagError, ValueError):
    """A linear system that should be invertible is singular."""


class EmptyGrid(StatDagError, ValueError):
    """Cross-validation was given an empty penalty grid."""


class ConfigError(StatDagError, ValueError):
    """A configuration document failed validation."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class SchemaError(StatDagError, ValueError):
    """An input file does not follow the expected JSON/CSV schema."""
