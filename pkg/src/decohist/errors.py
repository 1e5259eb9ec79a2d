"""Exception hierarchy shared across the package."""


class DecohistError(Exception):
    """Base class for all package errors."""


class ConfigError(DecohistError):
    """Invalid configuration: unknown key, bad type, constraint violation."""


class NumericalError(DecohistError):
    """A numerical contract was violated during a run."""


class ChainTooShortError(NumericalError):
    """The wavefront reached the end of the bath chain; increase M."""


class CapLeakageError(NumericalError):
    """Population at the total-quanta cap exceeded tolerance; raise n_max."""
