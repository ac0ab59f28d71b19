class ShapeError(ValueError):
    """Raised when tensor shapes or counts are incompatible."""


class RangeError(ValueError):
    """Raised when a scalar argument is outside its allowed range."""


class NonFiniteError(ValueError):
    """Raised when an input tensor contains NaN or Inf."""


class TgrdFormatError(ValueError):
    """Malformed TGRD file. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
