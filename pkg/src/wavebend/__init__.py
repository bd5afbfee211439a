"""
wavebend: bending of wave functions in one-dimensional periodic and
coupled-channel potentials.

Modules
-------
model       potential and channel-system specifications
propagate   exact piecewise and RK4 propagation, traces, knots, residuals
bands       monodromy, zone scans, gap solutions, beating, Tamm states
channels    multichannel scattering, effective potentials, transparency
cxperiodic  complex periodic potentials via the real (R, I) system
bsec        two-channel bound state embedded in the continuum
cli         command-line front end
"""

from . import bands, bsec, channels, cxperiodic, model, propagate
from .errors import (AmplitudeOverflow, DegenerateEnergy, KnotsUndefined, MatchingDegenerate, NoBumps,
                     NoGapToTrack, NoOpenChannels, NotAGap, NumericalError, SpecError, WavebendError)

__version__ = "0.1.0"

__all__ = [
    "bands", "bsec", "channels", "cxperiodic", "model", "propagate",
    "WavebendError", "SpecError", "NumericalError", "AmplitudeOverflow", "NotAGap", "DegenerateEnergy",
    "MatchingDegenerate", "NoOpenChannels", "KnotsUndefined", "NoBumps", "NoGapToTrack",
]
