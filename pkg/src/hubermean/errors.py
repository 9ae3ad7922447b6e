"""Exception types shared across the package."""


class HuberMeanError(Exception):
    """Base class for all errors raised by hubermean."""


class ContractViolationError(HuberMeanError, ValueError):
    """Arguments live on different manifolds or tangent spaces."""


class DomainError(HuberMeanError, ValueError):
    """A value lies outside the domain of an operation."""


class CutLocusError(HuberMeanError, ArithmeticError):
    """A point lies (numerically) on the cut locus of the base point."""


class DegenerateScaleError(HuberMeanError, ArithmeticError):
    """A robust scale estimate collapsed to zero."""


class InsufficientDataError(HuberMeanError, ValueError):
    """Too few usable observations remain for an estimate."""


class SingularHessianError(HuberMeanError, ArithmeticError):
    """A Hessian or covariance matrix is numerically singular."""


class NoCrossingError(HuberMeanError, ArithmeticError):
    """A target efficiency is not attained inside the search bracket."""


class SolverError(HuberMeanError, ArithmeticError):
    """The solver could not take a valid step."""


class NotConvergedError(HuberMeanError, ArithmeticError):
    """An estimate required to be converged was not."""
