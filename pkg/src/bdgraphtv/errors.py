"""Exception types raised across the package."""


class ArgumentError(ValueError):
    """An argument is outside the operation's domain (bad eps, misaligned arrays, ...)."""


class KernelError(ValueError):
    """A kernel profile violates the admissibility conditions."""


class InfeasibleIntegralError(ArithmeticError):
    """A kernel integral (second moment, anisotropic norm) diverges."""


class DensityBoundError(ValueError):
    """A density evaluation fell outside its declared [alpha, beta] bounds."""


class PathologicalDensityError(RuntimeError):
    """Rejection sampling acceptance rate is too low to be usable."""


class UnsupportedError(NotImplementedError):
    """The requested combination of inputs is outside what v1 supports."""


class UndefinedPointError(ValueError):
    """A pointwise quantity was requested where it is not defined (on a jump set)."""


class ResolutionError(ValueError):
    """The reference grid is too coarse for the requested finite-difference step."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or violates the bandwidth regime."""


class SinkhornConvergenceError(RuntimeError):
    """Sinkhorn iterations did not reach the marginal tolerance."""

    def __init__(self, message, gap, iterations):
        super().__init__(message)
        self.gap = gap
        self.iterations = iterations
