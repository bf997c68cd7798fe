"""Exception types raised across the package.

Every error derives from :class:`RppgBpError` (itself a ``ValueError``) so the
CLI can map all data problems to a single exit code.
"""


class RppgBpError(ValueError):
    pass


# signal core
class InvalidCutoffs(RppgBpError):
    pass


class SignalTooShort(RppgBpError):
    pass


class ConstantSignal(RppgBpError):
    pass


class ZeroVariance(RppgBpError):
    pass


# rppg extraction
class SourceTooSmall(RppgBpError):
    pass


class EmptyMask(RppgBpError):
    pass


class EmptyInput(RppgBpError):
    pass


class FrameShapeMismatch(RppgBpError):
    pass


# beat pipeline
class FewerThanTwoPeaks(RppgBpError):
    pass


class NoBeats(RppgBpError):
    pass


class BeatTooLong(RppgBpError):
    pass


# features
class OutOfRangeAge(RppgBpError):
    pass


class OutOfRangeBmi(RppgBpError):
    pass


class NormDegenerate(RppgBpError):
    pass


# neural
class ShapeMismatch(RppgBpError):
    pass


class NonFiniteActivation(RppgBpError):
    pass


class VariantInputMismatch(RppgBpError):
    pass


class EmptyPartition(RppgBpError):
    pass


class NoWindows(RppgBpError):
    pass


# synth
class InvalidMorphology(RppgBpError):
    pass


# eval
class LengthMismatch(RppgBpError):
    pass


class DegenerateVariance(RppgBpError):
    pass


class EmptySample(RppgBpError):
    pass


class UnknownRhythmLabel(RppgBpError):
    pass
