"""Exception hierarchy shared across the package."""


class VolSRError(Exception):
    """Base class for all errors raised by volsr."""


class MissingFile(VolSRError, FileNotFoundError):
    pass


class CorruptHeader(VolSRError, ValueError):
    pass


class NonFiniteData(VolSRError, ValueError):
    pass


class DimensionTooSmall(VolSRError, ValueError):
    pass


class OddDimension(VolSRError, ValueError):
    pass


class NegativeSigma(VolSRError, ValueError):
    pass


class TooFewSubjects(VolSRError, ValueError):
    pass


class VolumeTooSmall(VolSRError, ValueError):
    pass


class BadShape(VolSRError, ValueError):
    pass


class ChannelMismatch(VolSRError, ValueError):
    pass


class BadInputRank(VolSRError, ValueError):
    pass


class InputTooSmall(VolSRError, ValueError):
    pass


class NonFiniteActivation(VolSRError, FloatingPointError):
    pass


class ZeroWeight(VolSRError, ValueError):
    pass


class ShapeMismatch(VolSRError, ValueError):
    pass


class SliceTooSmall(VolSRError, ValueError):
    pass


class AllPlanesTooSmall(VolSRError, ValueError):
    pass


class EmptyBatch(VolSRError, ValueError):
    pass


class DegenerateReference(VolSRError, ValueError):
    pass


class EmptyInput(VolSRError, ValueError):
    pass


class NonFiniteGradient(VolSRError, FloatingPointError):
    pass


class NonFiniteLoss(VolSRError, FloatingPointError):
    """Training produced a NaN/Inf loss; ``dump_path`` points at the offending batch."""

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path


class IoFailure(VolSRError, OSError):
    pass


class VersionMismatch(VolSRError, ValueError):
    pass


class SliceOutOfRange(VolSRError, IndexError):
    pass


class DiscriminatorCollapse(UserWarning):
    """Warning category: the discriminator saturated for a long stretch of steps."""
