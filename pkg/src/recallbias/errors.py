"""Exception and warning classes.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto its documented codes: 2 for usage/configuration problems,
3 for bad input data and 4 for numerical failures.
"""


class RecallBiasError(Exception):
    exit_code = 4


class ConfigError(RecallBiasError, ValueError):
    exit_code = 2


class DataError(RecallBiasError, ValueError):
    exit_code = 3


class NumericalError(RecallBiasError, ArithmeticError):
    exit_code = 4


# -- data ------------------------------------------------------------------

class MissingColumn(DataError):
    pass


class NonBinaryValue(DataError):
    def __init__(self, column, row, value):
        self.column, self.row, self.value = column, row, value
        super().__init__(f"column {column!r}, row {row}: expected 0 or 1, got {value!r}")


class EmptyFile(DataError):
    pass


class InvalidProbabilities(DataError):
    pass


class NonDivisibleN(DataError):
    pass


class InsufficientExposed(DataError):
    pass


# -- numerical -------------------------------------------------------------

class InadmissibleEtas(NumericalError):
    """The assumed recall-bias rates imply a negative cell probability."""


class DegenerateMargin(NumericalError):
    pass


class DegenerateBound(NumericalError):
    def __init__(self, message, max_delta=None):
        self.max_delta = max_delta
        if max_delta is not None:
            message = f"{message} (largest admissible delta ~ {max_delta:.6g})"
        super().__init__(message)


class DegenerateStratum(NumericalError):
    pass


class AllDegenerate(NumericalError):
    pass


class DegenerateScores(NumericalError):
    pass


class InfeasibleInstance(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class PositivityViolation(NumericalError):
    pass


class ReplicateFailure(NumericalError):
    pass


class SeparationWarning(RuntimeWarning):
    """A fitted probability is pinned to within 1e-10 of 0 or 1."""


class ConvergenceWarning(RuntimeWarning):
    pass
