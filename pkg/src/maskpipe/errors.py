"""Exception types shared across the package."""


class MaskpipeError(Exception):
    """Base class for all maskpipe errors."""


class ShapeError(MaskpipeError, ValueError):
    """Operand shapes are inconsistent with an operation's contract."""


class ParameterError(MaskpipeError, ValueError):
    """A scalar argument is outside its documented range."""


class FormatError(MaskpipeError, ValueError):
    """A byte or text stream does not look like the expected format."""


class UnsupportedError(MaskpipeError, ValueError):
    """The format was recognized but uses a feature this reader rejects."""


class CorruptionError(MaskpipeError, ValueError):
    """The stream parsed structurally but its sizes or offsets are inconsistent."""


class BindError(MaskpipeError, ValueError):
    """A weight archive does not satisfy a model graph's parameter plan."""


class ParseError(MaskpipeError, ValueError):
    """A text input failed to parse. The message carries the 1-based line."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line
