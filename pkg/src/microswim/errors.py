"""Exception types shared across the package."""


class MicroswimError(Exception):
    """Base class for all package errors."""


class ConfigError(MicroswimError):
    """Invalid configuration value."""


class InvalidActionError(MicroswimError):
    """Action not applicable in the current swimmer state."""


class SingularConfigurationError(MicroswimError):
    """Closed-form denominator vanished; the parameters are out of range."""


class SingularSystemError(MicroswimError):
    """The force/torque balance system could not be solved."""


class CalibrationError(MicroswimError):
    """No unique sign convention reproduces the closed-form velocities."""


class NonClosingCycleError(MicroswimError):
    """Action sequence does not return the shape to its starting point."""


class TransformRangeError(MicroswimError):
    """Displacement fell below the configured transform baseline."""


class PromptTemplateError(MicroswimError):
    """Prompt template malformed or a placeholder was left unresolved."""


class ActionParseError(MicroswimError):
    """Backend response did not contain a readable action."""


class BackendError(MicroswimError):
    """Chat backend failed (transport, auth, rate limit, ...)."""


class ReplayExhaustedError(BackendError):
    """Replay backend ran out of recorded responses."""


class UsageError(MicroswimError):
    """Caller violated an operation's usage contract."""
