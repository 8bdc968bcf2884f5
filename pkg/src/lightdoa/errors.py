"""Exception types shared across the package."""


class LightDoaError(Exception):
    """Base class for all package errors."""


class InvalidArgument(LightDoaError, ValueError):
    """An argument violates a documented precondition."""


class SceneGenerationError(LightDoaError):
    """Scene sampling could not produce a valid scene."""


class FormatError(LightDoaError):
    """A file does not match the expected on-disk format."""


class UndefinedEstimate(LightDoaError):
    """An estimator has no defined output for the given input."""


class ConfigError(LightDoaError):
    """Incompatible configuration, e.g. a checkpoint built for another grid."""
