class BlurMapError(Exception):
    """Base class for every error raised by the estimation stack."""


class InvalidArgumentError(BlurMapError, ValueError):
    pass


class ShapeMismatchError(InvalidArgumentError):
    """Raised by the tensor engine; the message names the offending layer."""

    def __init__(self, layer: str, detail: str) -> None:
        super().__init__(f"layer '{layer}': {detail}")
        self.layer = layer


class ImageIOError(BlurMapError, OSError):
    def __init__(self, path, detail: str) -> None:
        super().__init__(f"{path}: {detail}")
        self.path = str(path)


class WeightsIOError(BlurMapError, OSError):
    def __init__(self, path, detail: str) -> None:
        super().__init__(f"{path}: {detail}")
        self.path = str(path)


class PreconditionError(BlurMapError, RuntimeError):
    pass


class TrainingError(BlurMapError, RuntimeError):
    pass


class EmptyInputError(BlurMapError):
    """Nothing to work with: no edges detected, no pattern edges to propagate."""
