"""Exception hierarchy shared across the package."""


class PipeflowError(Exception):
    """Base class for all package errors."""


class ParameterError(PipeflowError, ValueError):
    """Invalid physical parameters."""


class BetaOutOfRange(ParameterError):
    pass


class TensionTooLow(ParameterError):
    pass


class NegativeParameter(ParameterError):
    pass


class GridTooCoarse(PipeflowError, ValueError):
    pass


class SolverError(PipeflowError, RuntimeError):
    """Numerical failure inside one of the solvers."""


class StiffnessFailure(SolverError):
    pass


class NonFinite(SolverError):
    pass


class KappaZero(PipeflowError, ValueError):
    """Asymptotic formula needs a strictly positive feedback gain."""


class NoConvergence(SolverError):
    pass


class ConvergedToWrongBasin(SolverError):
    pass


class BoundaryTooClose(SolverError):
    pass


class IncompleteSpectrum(SolverError):
    pass


class RankDeficiencyAmbiguous(SolverError):
    pass


class IndexMismatch(PipeflowError, ValueError):
    pass


class GramSingular(SolverError):
    pass


class ProjectionResidualTooLarge(SolverError):
    pass


class StepUnstable(SolverError):
    pass


class NonPositiveEnergy(PipeflowError, ValueError):
    pass


class SpecInvalid(PipeflowError, ValueError):
    pass


class IoFailure(PipeflowError, OSError):
    pass
