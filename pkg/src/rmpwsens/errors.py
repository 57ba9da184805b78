"""Exception hierarchy.

Errors split into two families so the command line can map them to exit
codes: input/validation problems (exit 2) and numerical failures (exit 3).
"""


class RmpwError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(RmpwError, ValueError):
    """Bad input: out-of-range arguments, schema violations, bad configs."""


class InvalidArgumentError(ValidationError):
    pass


class MissingColumnError(ValidationError):
    pass


class SchemaError(ValidationError):
    """CSV contents violate the ingestion schema.

    ``problems`` holds one ``(row, column, reason)`` triple per offending cell.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"row {r}, column {c!r}: {why}" for r, c, why in self.problems[:50]]
        if len(self.problems) > 50:
            lines.append(f"... and {len(self.problems) - 50} more")
        super().__init__("schema validation failed:\n  " + "\n  ".join(lines))


class InfeasibleBoundsError(ValidationError):
    """Auxiliary correlations imply disjoint intervals for the sensitivity parameter."""


class NumericalError(RmpwError, ArithmeticError):
    """A model fit or evaluation broke down numerically."""


class SingularDesignError(NumericalError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"design matrix is rank deficient at column {column!r}")


class SeparationError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DegenerateVarianceError(NumericalError):
    pass


class NumericalDegeneracyError(NumericalError):
    pass


class DegeneratePropensityError(NumericalError):
    def __init__(self, message, unit=None):
        super().__init__(message)
        self.unit = unit


class BootstrapInstabilityError(NumericalError):
    def __init__(self, dropped, total):
        self.dropped = dropped
        self.total = total
        super().__init__(f"{dropped} of {total} bootstrap resamples failed to fit")
