"""Exception hierarchy shared by all binpose modules."""


class BinposeError(Exception):
    """Base class for every error raised by this package."""


# rotations
class ZeroNorm(BinposeError, ValueError):
    pass


class NotARotation(BinposeError, ValueError):
    pass


# transforms
class DuplicateChild(BinposeError, ValueError):
    pass


class CycleDetected(BinposeError, ValueError):
    pass


class UnknownFrame(BinposeError, KeyError):
    pass


class Disconnected(BinposeError, ValueError):
    pass


# camera
class InvalidDepth(BinposeError, ValueError):
    pass


class OutOfBounds(BinposeError, ValueError):
    pass


class BehindCamera(BinposeError, ValueError):
    pass


class EmptyRender(BinposeError, RuntimeError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


# descriptor / codebook
class EmptyImage(BinposeError, ValueError):
    pass


class DimensionMismatch(BinposeError, ValueError):
    pass


# binsim
class PlacementFailed(BinposeError, RuntimeError):
    pass


class NoCandidates(BinposeError, RuntimeError):
    pass


# harness
class ConfigError(BinposeError, ValueError):
    pass
