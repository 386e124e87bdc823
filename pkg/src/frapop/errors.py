"""Exception hierarchy shared across the package."""


class FrapopError(Exception):
    """Base class for all package-specific errors."""


class ZeroMassMeasure(FrapopError):
    """A normalized distance was requested for a measure of total mass zero."""


class InvalidInterval(FrapopError):
    """An interval [lo, hi] with lo >= hi was supplied."""


class NegativeDensity(FrapopError):
    """A density sample came out negative."""


class TooLarge(FrapopError):
    """Input exceeds the size bound of a brute-force oracle."""


class InvalidParam(FrapopError):
    """A numeric parameter violates its sign/positivity requirement."""


class SublinearityViolated(FrapopError):
    """A child-placement map failed the f(x) <= x spot check."""


class EmptyLocationSet(FrapopError):
    """The location set for the piecewise-linear rebuild is empty."""


class OutOfDomain(FrapopError):
    """A coefficient was evaluated outside its defined domain."""


class NonFiniteLocation(FrapopError):
    """A particle trajectory left the finite range."""


class NegativeMass(FrapopError):
    """Mass integration produced a value below the clamping threshold."""


class NonIntegralStepCount(FrapopError):
    """T / dt is not an integer within tolerance."""
