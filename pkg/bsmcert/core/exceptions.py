"""
Error types raised by the certification library.

The CLI maps these to exit codes; library code never exits or prints.
"""


class CertificationError(Exception):
    """Base class for every error raised by the core package."""


class DimensionError(CertificationError, ValueError):
    """Shapes or tensor factor dimensions do not agree."""


class NotHermitianError(CertificationError, ValueError):
    pass


class InvalidStateError(CertificationError, ValueError):
    pass


class InvalidMeasurementError(CertificationError, ValueError):
    pass


class DomainError(CertificationError, ValueError):
    """A parameter or spectrum is outside the range an operation is defined on."""


class RankDeficientError(DomainError):
    pass


class NonUnitalError(CertificationError):
    pass


class PreconditionError(CertificationError):
    """Observed statistics do not meet what a verifier requires."""


class IdentityCheckError(CertificationError):
    """A self-testing identity or operator inequality failed numerically."""


class UnsupportedBasisError(CertificationError):
    pass


class ConfigError(CertificationError):
    pass
