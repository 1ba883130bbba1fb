"""Exception hierarchy. The CLI maps each family to an exit code."""


class GazeAffectError(Exception):
    exit_code = 1


class ValidationError(GazeAffectError, ValueError):
    """Bad input: schema violations, out-of-range values, shape mismatches."""

    exit_code = 2


class NumericError(GazeAffectError, ArithmeticError):
    exit_code = 3


class EmptyTrialError(ValidationError):
    pass


class NoNeutralTrialsError(ValidationError):
    pass


class DegenerateGeometryError(ValidationError):
    pass


class TrainingDivergedError(NumericError):
    pass
