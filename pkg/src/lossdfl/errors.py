"""Exception types raised by the simulator."""


class CSVParseError(ValueError):
    """A dataset file could not be parsed. ``line`` is 0-indexed over physical lines."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class IncompatibleModelsError(ValueError):
    """Parameter vectors with different architectures were combined."""


class NumericFailure(ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, batch_index: int | None = None):
        super().__init__(message)
        self.batch_index = batch_index


class ConfigError(ValueError):
    """Invalid experiment configuration. ``key`` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
