"""Exception hierarchy shared by all modules."""


class SrkError(Exception):
    """Base class for all package errors."""


class ValidationError(SrkError, ValueError):
    """Malformed input (bad shapes, unknown names, out-of-range options)."""


class NumericalError(SrkError, ArithmeticError):
    """A well-formed request that fails for mathematical reasons."""


class DimensionMismatch(ValidationError):
    pass


class StructureError(ValidationError):
    """Tableau does not have the diagonally implicit / noise-explicit form."""


class UnknownParameter(ValidationError):
    pass


class ParameterRegime(ValidationError):
    pass


class BadRange(ValidationError):
    pass


class NonpositiveStep(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class InconsistentInitialValue(ValidationError):
    pass


class DegenerateFit(ValidationError):
    pass


class ZeroDenominator(NumericalError):
    def __init__(self, coefficient, message=None):
        self.coefficient = coefficient
        super().__init__(message or f"denominator vanishes: {coefficient}")


class DiscriminantNegative(NumericalError):
    pass


class SqrtDomain(NumericalError):
    pass


class ConstraintViolated(NumericalError):
    pass


class NoRoot(NumericalError):
    pass


class StageSingular(NumericalError):
    def __init__(self, stage, message=None):
        self.stage = stage
        super().__init__(message or f"stage {stage} denominator vanishes")


class NewtonDiverged(NumericalError):
    def __init__(self, stage, residual, step=None):
        self.stage = stage
        self.residual = residual
        self.step = step
        where = f"step {step}, " if step is not None else ""
        super().__init__(f"Newton iteration failed ({where}stage {stage}, residual {residual:.3e})")


class SingularIteration(NumericalError):
    def __init__(self, stage, step=None):
        self.stage = stage
        self.step = step
        where = f"step {step}, " if step is not None else ""
        super().__init__(f"stage Jacobian is singular ({where}stage {stage})")
