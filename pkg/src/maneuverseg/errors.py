"""Exception hierarchy. Every error raised by the toolkit derives from ``ManeuverSegError``."""


class ManeuverSegError(Exception):
    pass


# telemetry
class MalformedRow(ManeuverSegError, ValueError):
    pass


class NonMonotonicTime(ManeuverSegError, ValueError):
    pass


class EmptyTrip(ManeuverSegError, ValueError):
    pass


class OutOfBounds(ManeuverSegError, IndexError):
    pass


# preprocess / segmentation / features
class WindowTooLarge(ManeuverSegError, ValueError):
    pass


class EmptyWindow(ManeuverSegError, ValueError):
    pass


class SignalTooShort(ManeuverSegError, ValueError):
    pass


class SegmentTooShort(ManeuverSegError, ValueError):
    pass


class InsufficientData(ManeuverSegError, ValueError):
    pass


# models
class ShapeMismatch(ManeuverSegError, ValueError):
    pass


class MissingClass(ManeuverSegError, ValueError):
    pass


class EmptyDataset(ManeuverSegError, ValueError):
    pass


class VersionMismatch(ManeuverSegError, ValueError):
    pass


class CorruptFile(ManeuverSegError, ValueError):
    pass


# metrics / synth / annotate
class EmptyInput(ManeuverSegError, ValueError):
    pass


class TripTooShort(ManeuverSegError, ValueError):
    pass


class OverlappingEvents(ManeuverSegError, ValueError):
    pass


class IoFailure(ManeuverSegError, OSError):
    pass


class ConfigError(ManeuverSegError, ValueError):
    pass
