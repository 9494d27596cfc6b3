"""Exception hierarchy shared by all solver modules."""


class SolitonLabError(Exception):
    """Base class for all library errors."""


class ConfigError(SolitonLabError):
    """Invalid input data or violated precondition."""


class DomainError(SolitonLabError):
    """Argument outside the mathematical domain of an operation."""


class NoBracket(SolitonLabError):
    """Root-finder bracket does not enclose a sign change."""


class NoConvergence(SolitonLabError):
    """Iteration cap reached before the tolerance was met."""


class InsufficientRange(SolitonLabError):
    """Grid window too short (or degenerate) for the requested fit."""


class CriticalExponent(SolitonLabError):
    """Mode parameters too close to a critical exponent."""


class TailDominates(SolitonLabError):
    """Truncated improper-integral tail exceeds the requested tolerance."""


class SpectrumTooShort(SolitonLabError):
    """Supplied link spectrum ends before the truncation index."""


class SingularSystem(SolitonLabError):
    """Discretized linear system is singular or corrupted."""


class Inadmissible(SolitonLabError):
    """Radial potential violates metric positivity."""


class LineSearchFailed(SolitonLabError):
    """No admissible damped step reduces the residual norm."""


class PathStuck(SolitonLabError):
    """Continuity step size fell below the hard floor."""

    def __init__(self, s: float, message: str = ""):
        self.s = s
        super().__init__(message or f"continuity path stuck at s={s!r}")


class Violation(SolitonLabError):
    """A structural property that must hold on converged solutions failed."""


class InsufficientFarField(SolitonLabError):
    """Grid does not extend far enough beyond the data support."""


class Divergent(SolitonLabError):
    """Weighted integrand is not numerically summable."""


class UnsupportedOrder(SolitonLabError):
    """Derivative order outside the implemented range."""
