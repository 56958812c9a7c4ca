"""Exception types raised across the package."""


class SplatError(Exception):
    pass


class InvalidInputError(SplatError, ValueError):
    pass


class FormatError(SplatError, ValueError):
    """A file does not follow its documented format."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(SplatError, ValueError):
    pass


class ContractError(SplatError, RuntimeError):
    """Caller broke an API contract (shape mismatch, stale forward state, ...)."""


class ConfigurationError(SplatError, ValueError):
    pass


class CheckpointVersionError(SplatError, RuntimeError):
    pass


class NonFiniteLossError(SplatError, FloatingPointError):
    def __init__(self, iteration: int, term: str, value: float):
        self.iteration = iteration
        self.term = term
        self.value = value
        super().__init__(f"non-finite loss at iteration {iteration}: {term} = {value}")
