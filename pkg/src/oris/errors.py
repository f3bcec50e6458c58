"""Error types shared across the package."""


class ContractError(ValueError):
    """An argument violated a documented precondition (shape, range, enum)."""


class UsageError(RuntimeError):
    """An operation was called in an invalid order (e.g. backward before forward)."""


class InvalidStateError(ValueError):
    """A state vector cannot be loaded into an environment."""


class ConfigError(ValueError):
    """A config document failed schema validation."""


class NumericsError(RuntimeError):
    """A non-finite value appeared where training cannot continue."""
