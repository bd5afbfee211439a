"""
Complex periodic potentials V = V_R + i t V_I.

Writing psi = R + i I turns the complex equation into two real channels
with the same diagonal V_R and an antisymmetric coupling: -t V_I in the R
equation and +t V_I in the I equation.  Everything here goes through that
real form, so complex lattices reuse the channel propagator unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import model
from .bands import floquet_multipliers, zone_edges, _bisect, _golden_max
from .errors import NoGapToTrack, NotAGap, SpecError
from .model import ChannelSystemSpec
from .propagate import DEFAULT_H, WaveTrace, integrate_channels, transfer_matrix

SPECTRUM_TOL = 1e-8


@dataclass(frozen=True)
class ComplexLattice:
    real: object  # Lattice or cosine Analytic
    imag: object
    t: float = 1.0

    def __post_init__(self):
        errors = []
        for name, p in (("real", self.real), ("imag", self.imag)):
            if model.period_of(p) is None:
                errors.append(f"{name} part is not periodic")
            elif model.is_complex(p):
                errors.append(f"{name} part must be real valued")
            errors += model.validate(p)
        if not errors:
            a, b = model.period_of(self.real), model.period_of(self.imag)
            if abs(a - b) > 1e-12 * max(a, b):
                errors.append(f"period mismatch: {a!r} vs {b!r}")
        if errors:
            raise SpecError(errors)

    @property
    def period(self) -> float:
        return model.period_of(self.real)

    def with_t(self, t: float) -> "ComplexLattice":
        return replace(self, t=float(t))

    def as_system(self) -> ChannelSystemSpec:
        """The (R, I) channel system."""
        vi = self.imag
        return ChannelSystemSpec(
            (0.0, 0.0),
            ((self.real, model.scaled(vi, -self.t)), (model.scaled(vi, self.t), self.real)),
            symmetric=False,
        )

    def evaluate(self, x):
        """Complex V at x."""
        return model.evaluate(self.real, x) + 1j * self.t * model.evaluate(self.imag, x)


def ri_system(v_real, v_imag, t: float = 1.0) -> ChannelSystemSpec:
    """Two-channel form of V_R + i t V_I for any pair of real potentials."""
    return ChannelSystemSpec(
        (0.0, 0.0),
        ((v_real, model.scaled(v_imag, -t)), (model.scaled(v_imag, t), v_real)),
        symmetric=False,
    )


def ri_integrate(v_real, v_imag, E: float, init_r, init_i, x0: float, x1: float,
                 h: float = DEFAULT_H, t: float = 1.0) -> WaveTrace:
    """Integrate the real and imaginary parts of psi as coupled channels.

    ``init_r`` and ``init_i`` are (value, slope) pairs for R and I; channel 0
    of the trace is R, channel 1 is I.
    """
    system = ri_system(v_real, v_imag, t)
    psi0 = (init_r[0], init_i[0])
    dpsi0 = (init_r[1], init_i[1])
    return integrate_channels(system, E, x0, x1, (psi0, dpsi0), h)


def _complex_maps(system, E, a, h):
    """Complex 2x2 monodromy from the 4x4 real one, stacked over energies."""
    T = transfer_matrix(system, np.atleast_1d(E), 0.0, a, h)
    # columns 0 and 2 start from psi = 1 and psi' = 1 with I = I' = 0
    M = np.empty(T.shape[:1] + (2, 2), dtype=complex)
    M[:, 0, 0] = T[:, 0, 0] + 1j * T[:, 1, 0]
    M[:, 1, 0] = T[:, 2, 0] + 1j * T[:, 3, 0]
    M[:, 0, 1] = T[:, 0, 2] + 1j * T[:, 1, 2]
    M[:, 1, 1] = T[:, 2, 2] + 1j * T[:, 3, 2]
    return M


@dataclass(frozen=True)
class ComplexSpectrum:
    """Floquet data of a complex lattice on an energy grid."""

    E: np.ndarray
    M: np.ndarray
    D: np.ndarray
    lam_plus: np.ndarray
    lam_minus: np.ndarray
    D_error: np.ndarray
    tol: np.ndarray

    @property
    def det(self) -> np.ndarray:
        return np.linalg.det(self.M)

    @property
    def distance(self) -> np.ndarray:
        """min over the two multipliers of ||lam| - 1|."""
        return np.minimum(np.abs(np.abs(self.lam_plus) - 1), np.abs(np.abs(self.lam_minus) - 1))

    @property
    def in_spectrum(self) -> np.ndarray:
        return self.distance < self.tol


def complex_spectrum(cl: ComplexLattice, energies, h: float = DEFAULT_H) -> ComplexSpectrum:
    """Monodromy, multipliers and Bloch classification at each energy.

    E is in the spectrum when a multiplier lies on the unit circle to within
    max(1e-8, sqrt(2 |dD|)), where dD is the Richardson estimate of the
    integration error in D from steps h and 2h.  Near touching points a
    multiplier moves off the circle like the square root of the error in D,
    so a fixed 1e-8 would misclassify them.
    """
    Es = np.atleast_1d(np.asarray(energies, dtype=float))
    system = cl.as_system()
    a = cl.period
    M = _complex_maps(system, Es, a, h)
    D = 0.5 * (M[:, 0, 0] + M[:, 1, 1])
    if any(model.is_smooth(e) for row in system.matrix for e in row):
        M2 = _complex_maps(system, Es, a, 2 * h)
        err = np.abs(D - 0.5 * (M2[:, 0, 0] + M2[:, 1, 1])) / 15.0
    else:
        err = np.zeros(Es.shape)
    lp, lm = floquet_multipliers(M)
    tol = np.maximum(SPECTRUM_TOL, np.sqrt(2 * err))
    return ComplexSpectrum(Es, M, D, lp, lm, err, tol)


@dataclass(frozen=True)
class ComplexMonodromy:
    E: float
    matrix: np.ndarray
    discriminant: complex
    lam_plus: complex
    lam_minus: complex
    det: complex
    in_spectrum: bool
    tol: float


def complex_monodromy(cl: ComplexLattice, E: float, h: float = DEFAULT_H) -> ComplexMonodromy:
    s = complex_spectrum(cl, [E], h)
    return ComplexMonodromy(float(E), s.M[0], complex(s.D[0]), complex(s.lam_plus[0]), complex(s.lam_minus[0]),
                            complex(s.det[0]), bool(s.in_spectrum[0]), float(s.tol[0]))


# ---------------------------------------------------------------------------
# gap tracking in t
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GapWidthTable:
    t: np.ndarray
    width: np.ndarray
    lower: np.ndarray  # NaN when merged
    upper: np.ndarray
    merged: np.ndarray
    gap_index: int

    @property
    def monotone_shrink(self) -> bool:
        return bool(np.all(np.diff(self.width) <= 1e-12))

    def rows(self) -> list[dict]:
        return [{"t": float(t), "width": float(w), "merged": bool(m)}
                for t, w, m in zip(self.t, self.width, self.merged)]


def gap_width_scan(family: ComplexLattice, t_grid, gap_index: int = 0, emin: float = 0.1,
                   emax: float = 9.0, samples: int = 150, h: float = DEFAULT_H) -> GapWidthTable:
    """Width of one gap of V_R + i t V_I as t runs over ``t_grid``.

    The gap is picked at t = 0 from the real zone scan of V_R on
    [emin, emax] and followed from one t to the next inside a window around
    its previous position; every t, including 0, goes through the complex
    classification.  Its edges are where the larger multiplier
    modulus crosses 1 + tol.  A gap that has closed is reported with width
    0 and ``merged`` set.
    """
    ts = np.asarray(t_grid, dtype=float)
    if not np.any(ts == 0):
        raise SpecError("t grid must include 0")
    ts = np.sort(ts)
    report = zone_edges(family.real, emin, emax, h=h)
    try:
        g0 = report.gap(gap_index)
    except NotAGap:
        raise NoGapToTrack(f"gap {gap_index} is already closed at t = 0") from None
    lo0, hi0 = g0.lower, g0.upper
    w0 = hi0 - lo0
    centre = 0.5 * (lo0 + hi0)
    out = {"lower": [], "upper": [], "width": [], "merged": []}
    for t in ts:
        cl = family.with_t(t)
        lo, hi = _track(cl, centre, w0, samples, h)
        if lo is None:
            out["lower"].append(math.nan)
            out["upper"].append(math.nan)
            out["width"].append(0.0)
            out["merged"].append(True)
        else:
            out["lower"].append(lo)
            out["upper"].append(hi)
            out["width"].append(hi - lo)
            out["merged"].append(False)
            centre = 0.5 * (lo + hi)
    return GapWidthTable(ts, np.array(out["width"]), np.array(out["lower"]), np.array(out["upper"]),
                         np.array(out["merged"]), gap_index)


def _track(cl, centre, w0, samples, h):
    a, b = centre - w0, centre + w0
    Es = np.linspace(a, b, samples)
    spec = complex_spectrum(cl, Es, h)
    tol = float(spec.tol.max())

    def excess(E):
        M = _complex_maps(cl.as_system(), np.atleast_1d(E), cl.period, h)
        lp, _ = floquet_multipliers(M)
        return np.abs(lp) - 1 - tol

    f = np.abs(spec.lam_plus) - 1 - tol
    out = f > 0
    if not out.any():
        # a gap narrower than the grid may hide near the largest excess
        i = int(np.clip(np.argmax(f), 1, samples - 2))
        x, v = _golden_max(excess, [Es[i - 1]], [Es[i + 1]])
        if v[0] <= 0:
            return None, None
        lo = _bisect(excess, [Es[i - 1]], [x[0]], 1e-13)[0]
        hi = _bisect(excess, [x[0]], [Es[i + 1]], 1e-13)[0]
        return float(lo), float(hi)
    # the run of out-of-spectrum samples closest to the previous centre
    idx = np.nonzero(out)[0]
    j = idx[np.argmin(np.abs(Es[idx] - centre))]
    i0 = j
    while i0 > 0 and out[i0 - 1]:
        i0 -= 1
    i1 = j
    while i1 < samples - 1 and out[i1 + 1]:
        i1 += 1
    if i0 == 0 or i1 == samples - 1:
        raise NoGapToTrack("gap left the tracking window")
    lo = _bisect(excess, [Es[i0 - 1]], [Es[i0]], 1e-13)[0]
    hi = _bisect(excess, [Es[i1]], [Es[i1 + 1]], 1e-13)[0]
    return float(lo), float(hi)
