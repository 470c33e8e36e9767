class NumericalGuardError(RuntimeError):
    """A runtime numerical self-check failed (truncation, normalization, ...)."""


class UndefinedG2Error(ValueError):
    """g2 is undefined because the mean photon number (or side-peak area) vanishes."""
