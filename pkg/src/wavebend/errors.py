"""Exception types shared by all wavebend modules."""


class WavebendError(Exception):
    """Base class for every library error."""


class SpecError(WavebendError, ValueError):
    """A potential, channel system or run configuration is malformed."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class NumericalError(WavebendError, ArithmeticError):
    """A computation could not produce a trustworthy result."""


class AmplitudeOverflow(NumericalError):
    def __init__(self, x_last):
        self.x_last = x_last
        super().__init__(f"amplitude overflow after x = {x_last!r}")


class NotAGap(NumericalError):
    pass


class DegenerateEnergy(NumericalError):
    pass


class MatchingDegenerate(NumericalError):
    pass


class NoOpenChannels(NumericalError):
    pass


class KnotsUndefined(NumericalError):
    pass


class NoBumps(NumericalError):
    pass


class NoGapToTrack(NumericalError):
    pass
