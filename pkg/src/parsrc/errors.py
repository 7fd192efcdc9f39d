"""Exception types raised across the package."""


class SrcError(ValueError):
    """Base class for every error raised by parsrc."""


class InvalidLaneCount(SrcError):
    pass


class MalformedStream(SrcError):
    pass


class InvalidFrame(SrcError):
    pass


class DesignInfeasible(SrcError):
    """A filter design fell short of its target.

    ``achieved`` carries the measured stopband attenuation (dB) so callers
    can report how close the design got.
    """

    def __init__(self, message, achieved_atten_db=None, achieved_ripple_db=None):
        super().__init__(message)
        self.achieved_atten_db = achieved_atten_db
        self.achieved_ripple_db = achieved_ripple_db


class InvalidScaling(SrcError):
    pass


class UnsupportedFactor(SrcError):
    def __init__(self, total, neighbors):
        lo, hi = neighbors
        near = ", ".join(str(v) for v in (lo, hi) if v is not None)
        super().__init__(
            f"decimation factor {total} is not of the form 80*r*2^h "
            f"(r in [1, 4000], h in [0, 3]); nearest achievable: {near}"
        )
        self.total = total
        self.neighbors = neighbors


class InsufficientData(SrcError):
    pass


class ClipError(SrcError):
    pass
