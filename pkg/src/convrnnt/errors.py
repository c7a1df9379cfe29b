"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor shapes do not satisfy an operation's contract."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or inconsistent."""


class DataError(ValueError):
    """Input data (audio, manifest, vocab, tokens) violates a precondition."""


class TrainingError(RuntimeError):
    """Training hit an unrecoverable state (e.g. a non-finite loss)."""
