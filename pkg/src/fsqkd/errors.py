"""Exception types shared across the package."""


class FsqkdError(Exception):
    """Base class for all package-specific errors."""


class ZeroIntensityPair(FsqkdError, ValueError):
    """A tomography basis pair has zero total intensity."""


class InvalidState(FsqkdError, ValueError):
    """Stokes vector lies outside the Poincare sphere beyond tolerance."""


class DegenerateState(FsqkdError, ValueError):
    """Operation requires a polarized state but DOP is (numerically) zero."""


class ParseError(FsqkdError, ValueError):
    """A data file could not be parsed.

    Carries the 1-based line number when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RangeError(FsqkdError, ValueError):
    """A parsed value violates its documented range."""


class EmptyKey(FsqkdError, ValueError):
    """Sifted key contains no bits."""


class TaggedDominates(FsqkdError, ValueError):
    """Multi-photon (tagged) fraction is >= 1; no secret key possible."""


class ConfigError(FsqkdError, ValueError):
    """Scenario configuration is invalid; message names the key path."""
