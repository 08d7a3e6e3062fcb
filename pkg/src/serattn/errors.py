"""Exception types shared across the toolkit."""


class SerError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SerError, ValueError):
    pass


class DecodeError(SerError):
    """Malformed or truncated RIFF/WAVE data."""


class UnsupportedFormat(SerError):
    """Well-formed WAVE data with a codec or layout we do not read."""


class EmptyInput(SerError, ValueError):
    pass


class TooShort(SerError, ValueError):
    """Signal shorter than a single analysis frame."""


class ShapeError(SerError, ValueError):
    pass


class StateError(SerError, RuntimeError):
    pass


class NonFiniteGradient(SerError, FloatingPointError):
    def __init__(self, name: str, context: str = ""):
        self.name = name
        self.context = context
        msg = f"non-finite gradient in parameter {name!r}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class LabelError(SerError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class EmptyCorpus(SerError):
    pass


class ParseError(SerError, ValueError):
    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class StratifyWarning(UserWarning):
    pass


class CappedLossWarning(RuntimeWarning):
    """Cross-entropy hit the log floor (true-class probability was zero)."""
