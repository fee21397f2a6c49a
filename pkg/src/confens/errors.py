"""Exception hierarchy.

Every error carries the measured quantity that triggered it so callers can
report it without recomputing.
"""


class ConfensError(Exception):
    """Base class for all errors raised by this package."""


class NormalizationError(ConfensError, ValueError):
    def __init__(self, message, norm=None):
        super().__init__(message)
        self.norm = norm


class TailMassError(ConfensError, ValueError):
    def __init__(self, message, axis=None, mass=None):
        super().__init__(message)
        self.axis = axis
        self.mass = mass


class GridExtentError(ConfensError, ValueError):
    """Evolved support no longer fits on the grid."""

    def __init__(self, message, lost_mass=None):
        super().__init__(message)
        self.lost_mass = lost_mass


class ResolutionError(ConfensError, ValueError):
    """Spectral content reaches the Nyquist band (aliasing)."""

    def __init__(self, message, tail_mass=None):
        super().__init__(message)
        self.tail_mass = tail_mass


class ZeroProbabilityError(ConfensError, ValueError):
    """Conditioning on a classical outcome with vanishing marginal density."""

    def __init__(self, message, probability=None):
        super().__init__(message)
        self.probability = probability


class MomentumTruncationError(ConfensError, ValueError):
    def __init__(self, message, lost_mass=None):
        super().__init__(message)
        self.lost_mass = lost_mass


class HermiticityError(ConfensError, ValueError):
    def __init__(self, message, anti_hermitian_norm=None):
        super().__init__(message)
        self.anti_hermitian_norm = anti_hermitian_norm


class DensityMatrixError(ConfensError, ValueError):
    pass


class UnsupportedOperationError(ConfensError, NotImplementedError):
    pass


class PreconditionError(ConfensError, ValueError):
    pass


class MisuseError(PreconditionError):
    """An observable was routed to the wrong particle."""


class ConfigError(ConfensError, ValueError):
    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line
