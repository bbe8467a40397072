"""Exception types shared across the package."""


class ModalSubError(Exception):
    """Base class for all package-specific errors."""


class MeshFormatError(ModalSubError):
    """Raised when a mesh file cannot be parsed or violates topology rules."""


class NumericalError(ModalSubError):
    """Raised on non-finite inputs or diverged computations."""


class ConvergenceError(ModalSubError):
    """Raised when a solver fails to reach its tolerance where required."""


class FingerprintMismatchError(ModalSubError):
    """Raised when a checkpoint/dataset pair belongs to different problems."""


class ConfigError(ModalSubError):
    """Raised on invalid or inconsistent experiment configuration."""
