"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class InvalidMaskError(ValueError):
    """An attention mask leaves a query row with no visible key."""


class SaliencyFormatError(ValueError):
    """A saliency file failed to parse; carries the offending line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
