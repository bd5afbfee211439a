"""
Multichannel scattering and the single-channel reading of coupled waves.

A system of n channels with thresholds eps_a is matched at the middle of a
window outside which all couplings vanish.  Each side contributes the
asymptotic solutions allowed there (both plane waves in open channels, the
decaying exponential in closed ones), propagated inward, so growing tails
are never integrated through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model
from .errors import MatchingDegenerate, NoOpenChannels, NumericalError, SpecError
from .model import Analytic, ChannelSystemSpec, Lattice, Piecewise
from .propagate import DEFAULT_H, WaveTrace, integrate_channels, second_derivative, transfer_matrix

COND_MAX = 1e12
WINDOW_TOL = 1e-10
MASK_REL = 1e-6


# ---------------------------------------------------------------------------
# matching window
# ---------------------------------------------------------------------------

def _entry_support(e, tol):
    if isinstance(e, Analytic):
        if e.form == "zero":
            return None
        if e.form == "sech2":
            p = e.params
            depth, scale, c = abs(p["depth"]), abs(p["scale"]), p["center"]
            if depth == 0:
                return None
            # 4 |d| e^{-2 s |x - c|} bounds |d sech^2|
            half = max(0.0, math.log(4 * depth / tol) / (2 * scale))
            return c - half, c + half
        raise SpecError(f"{e.form} potential does not decay; no scattering window")
    if isinstance(e, Lattice):
        raise SpecError("lattice potentials do not decay; no scattering window")
    if isinstance(e, Piecewise):
        if not e.elements:
            return None
        return e.support
    raise SpecError(f"unsupported potential {e!r}")


def matching_window(spec, tol: float = WINDOW_TOL) -> tuple[float, float]:
    """Smallest [X_-, X_+] outside which every entry is below ``tol`` (plus a unit margin)."""
    system = model.as_system(spec)
    lo, hi = math.inf, -math.inf
    for row in system.matrix:
        for e in row:
            s = _entry_support(e, tol)
            if s is not None:
                lo, hi = min(lo, s[0]), max(hi, s[1])
    for pc in system.point_couplings:
        lo, hi = min(lo, pc.position), max(hi, pc.position)
    if lo > hi:
        return -1.0, 1.0
    return lo - 1.0, hi + 1.0


# ---------------------------------------------------------------------------
# scattering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScatteringResult:
    """Amplitudes for unit incoming waves e^{+ik x} (left) and e^{-ik x} (right).

    ``R[b, a]`` / ``T[b, a]``: reflected / transmitted amplitude in open
    channel ``open[b]`` for incidence from the left in ``open[a]``;
    ``R_right`` / ``T_right`` likewise for incidence from the right.
    Amplitudes are raw (not flux normalised); ``k`` and ``kappa`` are NaN
    for closed and open channels respectively.
    """

    E: float
    thresholds: tuple
    open: tuple
    k: np.ndarray
    kappa: np.ndarray
    R: np.ndarray
    T: np.ndarray
    R_right: np.ndarray
    T_right: np.ndarray
    window: tuple
    condition: float

    @property
    def n_open(self) -> int:
        return len(self.open)

    def flux(self, side: str = "left") -> np.ndarray:
        """sum_b (k_b / k_a)(|R_ba|^2 + |T_ba|^2) per incoming open channel a."""
        R, T = (self.R, self.T) if side == "left" else (self.R_right, self.T_right)
        ko = self.k[list(self.open)]
        w = ko[:, None] / ko[None, :]
        return np.sum(w * (np.abs(R) ** 2 + np.abs(T) ** 2), axis=0)

    @property
    def unitarity_defect(self) -> float:
        return float(max(np.abs(self.flux("left") - 1).max(), np.abs(self.flux("right") - 1).max()))

    @property
    def reciprocity_error(self) -> float:
        """max |k_b T_ba - k_a T'_ab|, T' the transmission for incidence from the right."""
        ko = self.k[list(self.open)]
        lhs = ko[:, None] * self.T
        rhs = (ko[:, None] * self.T_right).T
        return float(np.abs(lhs - rhs).max())

    @property
    def total_reflection(self) -> float:
        """Largest reflected amplitude over all channel pairs and both sides."""
        return float(max(np.abs(self.R).max(), np.abs(self.R_right).max()))

    def table(self) -> list[dict]:
        """One row per (incoming, outgoing) open pair, incidence from the left."""
        rows = []
        defect = self.unitarity_defect
        for a, ca in enumerate(self.open):
            for b, cb in enumerate(self.open):
                rows.append({"E": self.E, "in": ca + 1, "out": cb + 1,
                             "R2": float(abs(self.R[b, a]) ** 2), "T2": float(abs(self.T[b, a]) ** 2),
                             "unitarity_defect": defect})
        return rows


def _wave(n, c, q, x, sign, closed):
    """(psi, psi') of e^{sign i q x} (open) or e^{sign q (x - x_ref)} (closed) in channel c."""
    y = np.zeros(2 * n, dtype=complex)
    if closed:
        y[c], y[n + c] = 1.0, sign * q
    else:
        ph = np.exp(1j * sign * q * x)
        y[c], y[n + c] = ph, 1j * sign * q * ph
    return y


def scattering_channels(system: ChannelSystemSpec, E: float, window=None, h: float = DEFAULT_H) -> ScatteringResult:
    """Reflection and transmission amplitudes of a coupled system at energy E."""
    system = model.as_system(system)
    model.check(system)
    if model.is_complex(system):
        raise SpecError("scattering needs a real system")
    n = system.n
    eps = np.array(system.thresholds, dtype=float)
    E = float(E)
    kin = E - eps
    if np.any(kin == 0):
        raise MatchingDegenerate(f"E = {E!r} sits on a threshold")
    open_ = tuple(int(c) for c in np.nonzero(kin > 0)[0])
    if not open_:
        raise NoOpenChannels(f"no open channels at E = {E!r}")
    closed = tuple(int(c) for c in np.nonzero(kin < 0)[0])
    k = np.where(kin > 0, np.sqrt(np.abs(kin)), np.nan)
    kappa = np.where(kin < 0, np.sqrt(np.abs(kin)), np.nan)
    xl, xr = matching_window(system) if window is None else (float(window[0]), float(window[1]))
    if not xr > xl:
        raise SpecError("window must satisfy X_- < X_+")
    xm = 0.5 * (xl + xr)
    TL = transfer_matrix(system, E, xl, xm, h)
    TR = transfer_matrix(system, E, xr, xm, h)

    L_in = [TL @ _wave(n, c, k[c], xl, +1, False) for c in open_]
    L_out = [TL @ _wave(n, c, k[c], xl, -1, False) for c in open_]
    L_cl = [TL @ _wave(n, c, kappa[c], xl, +1, True) for c in closed]
    R_in = [TR @ _wave(n, c, k[c], xr, -1, False) for c in open_]
    R_out = [TR @ _wave(n, c, k[c], xr, +1, False) for c in open_]
    R_cl = [TR @ _wave(n, c, kappa[c], xr, -1, True) for c in closed]

    A = np.column_stack(L_out + L_cl + [-v for v in R_out] + [-v for v in R_cl])
    scale = np.linalg.norm(A, axis=0)
    An = A / scale
    cond = float(np.linalg.cond(An))
    if not np.isfinite(cond) or cond > COND_MAX:
        raise MatchingDegenerate(f"matching matrix condition {cond:.3g} exceeds {COND_MAX:.0e}")
    rhs = np.column_stack([-v for v in L_in] + list(R_in))
    sol = np.linalg.solve(An, rhs) / scale[:, None]
    no, nc = len(open_), len(closed)
    # unknown layout: left outgoing | left closed | right outgoing | right closed
    left_out = sol[:no]
    right_out = sol[no + nc:2 * no + nc]
    R = left_out[:, :no]
    T = right_out[:, :no]
    T_right = left_out[:, no:]
    R_right = right_out[:, no:]
    return ScatteringResult(E, tuple(system.thresholds), open_, k, kappa, R, T, R_right, T_right,
                            (xl, xr), cond)


def scattering_scalar(p, E: float, window=None, h: float = DEFAULT_H) -> ScatteringResult:
    """One-channel scattering; E must be positive."""
    if isinstance(p, ChannelSystemSpec):
        raise SpecError("scattering_scalar needs a scalar potential")
    if not E > 0:
        raise NoOpenChannels("scalar scattering needs E > 0")
    return scattering_channels(model.as_system(p), E, window, h)


# ---------------------------------------------------------------------------
# effective scalar potentials
# ---------------------------------------------------------------------------

def classify(v_ab, psi_a, psi_b):
    """Effective contribution V_ab psi_b / psi_a and whether it is inverted.

    Inverted means psi_a psi_b < 0: a barrier (V_ab > 0) then attracts and a
    well repels.  Works elementwise on arrays.
    """
    v_ab, psi_a, psi_b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (v_ab, psi_a, psi_b)))
    with np.errstate(divide="ignore", invalid="ignore"):
        u = v_ab * psi_b / psi_a
    return u, psi_a * psi_b < 0


@dataclass(frozen=True)
class EffectiveTrace:
    x: np.ndarray
    alpha: int
    U: np.ndarray  # NaN where masked
    mask: np.ndarray  # True near knots of psi_alpha
    inverted: np.ndarray  # (samples, n): psi_alpha psi_beta < 0, False on the diagonal and where masked
    residual: np.ndarray  # scaled defining-identity residual, NaN where masked or not computable

    @property
    def max_residual(self) -> float:
        r = self.residual[np.isfinite(self.residual)]
        return float(r.max()) if r.size else 0.0

    @property
    def masked(self) -> int:
        return int(self.mask.sum())

    def labels(self) -> np.ndarray:
        """'masked', 'normal' or 'inverted' per sample (any coupled channel inverted)."""
        out = np.where(self.inverted.any(axis=1), "inverted", "normal").astype(object)
        out[self.mask] = "masked"
        return out


def effective_potential(trace: WaveTrace, system: ChannelSystemSpec, alpha: int = 0) -> EffectiveTrace:
    """U_eff for channel ``alpha``: the coupling seen through the other channels.

    Samples with |psi_alpha| < 1e-6 max|psi_alpha| are masked.  The residual
    |psi_a'' + (E_a - V_aa - U) psi_a| uses a finite-difference psi'' and is
    divided by max(1, max|psi_a|).
    """
    system = model.as_system(system)
    if not trace.is_real:
        raise SpecError("effective potentials need a real trace")
    n = system.n
    if trace.n != n:
        raise SpecError("trace and system have different channel counts")
    x = trace.x
    psi = np.real(trace.psi)
    pa = psi[:, alpha]
    amp = np.abs(pa).max()
    mask = np.abs(pa) < MASK_REL * amp
    U = np.zeros(len(x))
    inverted = np.zeros((len(x), n), dtype=bool)
    for b in range(n):
        if b == alpha:
            continue
        v = np.real(model.evaluate(system.matrix[alpha][b], x))
        u, inv = classify(v, pa, psi[:, b])
        U += np.where(mask, 0.0, u)
        inverted[:, b] = inv & ~mask
    U[mask] = np.nan
    d2 = np.real(second_derivative(trace)[:, alpha])
    Ea = float(np.real(trace.E)) - system.thresholds[alpha]
    vaa = np.real(model.evaluate(system.matrix[alpha][alpha], x))
    res = np.abs(d2 + (Ea - vaa - U) * pa) / max(1.0, amp)
    res[mask] = np.nan
    return EffectiveTrace(x, alpha, U, mask, inverted, res)


# ---------------------------------------------------------------------------
# decay exponents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayReport:
    window: tuple
    fitted: np.ndarray  # per channel, slope of -log|psi|
    nominal: np.ndarray  # sqrt(eps_a - E), NaN for open channels
    low_confidence: np.ndarray
    inverted: bool


def _fit_decay(x, p):
    a = np.abs(p)
    s = np.sign(p[a > 0])
    low = bool(np.any(s[1:] * s[:-1] < 0))
    if low:
        # fit through the local maxima of |psi| instead
        i = np.nonzero((a[1:-1] >= a[:-2]) & (a[1:-1] >= a[2:]))[0] + 1
        if i.size < 2:
            return math.nan, True
        x, a = x[i], a[i]
    ok = a > 0
    if ok.sum() < 2:
        return math.nan, low
    slope = np.polyfit(x[ok], np.log(a[ok]), 1)[0]
    return float(-slope), low


def decay_exponents(trace: WaveTrace, system, E: float | None = None, window=None) -> DecayReport:
    """Least-squares decay rate of each channel over a tail window.

    The inversion flag is raised when some closed channel with the smaller
    nominal exponent decays measurably faster (by more than 1e-3 relative)
    than one with a larger nominal exponent.
    """
    system = model.as_system(system)
    E = float(np.real(trace.E)) if E is None else float(E)
    lo, hi = (trace.x[0], trace.x[-1]) if window is None else window
    sel = (trace.x >= lo) & (trace.x <= hi)
    if sel.sum() < 3:
        raise NumericalError("tail window holds fewer than three samples")
    psi = np.real(trace.true_psi())
    n = system.n
    fitted = np.empty(n)
    low = np.zeros(n, dtype=bool)
    for c in range(n):
        fitted[c], low[c] = _fit_decay(trace.x[sel], psi[sel, c])
    gap = np.array(system.thresholds, dtype=float) - E
    nominal = np.where(gap > 0, np.sqrt(np.abs(gap)), np.nan)
    inv = False
    for a in range(n):
        for b in range(n):
            if np.isfinite(nominal[a]) and np.isfinite(nominal[b]) and nominal[a] < nominal[b]:
                if np.isfinite(fitted[a]) and np.isfinite(fitted[b]) and fitted[a] > fitted[b] * (1 + 1e-3):
                    inv = True
    return DecayReport((float(lo), float(hi)), fitted, nominal, low, inv)


def exp_coupling(c: float, mu: float, shift: float = 20.0) -> Analytic:
    """c exp(-mu x) on x >= 0, written as a sech^2 centred at -shift/mu.

    depth sech^2(mu (x - x0) / 2) = 4 depth e^{-mu (x - x0)} (1 + O(e^{-mu (x - x0)})),
    so the relative deviation on x >= 0 is below 2 e^{-shift}.
    """
    if not mu > 0:
        raise SpecError("mu must be > 0")
    x0 = -shift / mu
    return Analytic("sech2", {"depth": c * math.exp(-mu * x0) / 4.0, "scale": mu / 2.0, "center": x0})


def exp_coupling_system(eps1: float, eps2: float, c: float, mu: float) -> ChannelSystemSpec:
    """Two bare thresholds joined by V12 = c exp(-mu x) (valid on x >= 0)."""
    v12 = exp_coupling(c, mu)
    return model.check(ChannelSystemSpec((eps1, eps2), ((model.ZERO, v12), (v12, model.ZERO))))


def _tail_states(system, E, c, mu, X, h):
    """States at x = 0 of the two decaying solutions, built by inward integration.

    ``A`` carries the homogeneous tail e^{-kappa_1 x} in channel 1, ``B`` the
    tail e^{-kappa_2 x} in channel 2 with channel 1 only driven by it
    (pumped out).  Starting values include the leading driven term.
    """
    k1, k2 = (math.sqrt(e - E) for e in system.thresholds)

    def start(kh, kd):
        r = mu + kh
        den = r * r - kd * kd
        drive = c * math.exp(-r * X) / den if abs(den) > 1e-12 else 0.0
        return math.exp(-kh * X), drive, r

    ha, da, ra = start(k1, k2)
    hb, db, rb = start(k2, k1)
    yA = np.array([ha, da, -k1 * ha, -ra * da])
    yB = np.array([db, hb, -rb * db, -k2 * hb])
    T = transfer_matrix(system, E, X, 0.0, h)
    return T @ yA, T @ yB


@dataclass(frozen=True)
class InversionScan:
    eps: tuple
    E: float
    tail: tuple
    rows: tuple  # dicts: c, mu, fitted/nominal exponents of both states, flags
    found: dict | None  # first row where the pumped state inverts and the generic one does not


def _decay_row(system, E, y0, tail, h):
    y0 = y0 / np.linalg.norm(y0)
    tr = integrate_channels(system, E, 0.0, tail[1], (y0[:2], y0[2:]), h)
    return decay_exponents(tr, system, E, tail)


def decay_inversion_scan(eps=(1.0, 2.0), E: float = 0.0, c_values=(0.5, 1.0, 2.0, 5.0),
                         mu_values=(0.25, 0.5, 1.0, 2.0), X: float = 12.0, tail=(2.0, 6.0),
                         h: float = DEFAULT_H) -> InversionScan:
    """Scan V12 = c exp(-mu x) for decay-exponent inversion on the half line.

    Two decaying states are compared per (c, mu): the generic one fixed by a
    wall in channel 1 (psi_1(0) = 0, psi_2(0) = 1) and the pumped-out one,
    whose channel 1 decays at mu + kappa_2 rather than kappa_1.  Exponents
    are fitted on ``tail``; a row inverts when the less closed channel
    decays faster.
    """
    if not (eps[0] > E and eps[1] > E and eps[0] < eps[1]):
        raise SpecError("need E below both thresholds and eps_1 < eps_2")
    rows = []
    found = None
    for mu in mu_values:
        for c in c_values:
            system = exp_coupling_system(eps[0], eps[1], c, mu)
            yA, yB = _tail_states(system, E, c, mu, X, h)
            # generic: combination with psi_1(0) = 0
            generic = yB[0] * yA - yA[0] * yB
            g = _decay_row(system, E, generic, tail, h)
            p = _decay_row(system, E, yB, tail, h)
            row = {"c": float(c), "mu": float(mu),
                   "nominal_1": float(p.nominal[0]), "nominal_2": float(p.nominal[1]),
                   "generic_1": float(g.fitted[0]), "generic_2": float(g.fitted[1]),
                   "pumped_1": float(p.fitted[0]), "pumped_2": float(p.fitted[1]),
                   "generic_inverted": g.inverted, "pumped_inverted": p.inverted}
            rows.append(row)
            if found is None and p.inverted and not g.inverted:
                found = row
    return InversionScan(tuple(eps), float(E), tuple(tail), tuple(rows), found)


# ---------------------------------------------------------------------------
# transparent interaction matrices
# ---------------------------------------------------------------------------

def detuned(system: ChannelSystemSpec, factor: float) -> ChannelSystemSpec:
    """Copy of a two-channel system with both off-diagonal entries scaled."""
    (v11, v12), (v21, v22) = system.matrix
    return ChannelSystemSpec(system.thresholds, ((v11, model.scaled(v12, factor)), (model.scaled(v21, factor), v22)),
                             system.point_couplings, system.symmetric)


def decoupling_residual(system: ChannelSystemSpec, x=None) -> float:
    """How far the rotated channels (psi_1 +- psi_2)/sqrt 2 are from one free
    channel and one carrying twice the diagonal entry.

    Returns the max over sample points of the rotated off-diagonal entry and
    of the deviation of the rotated diagonal from {2 V11, 0} (best pairing).
    """
    if system.n != 2:
        raise SpecError("decoupling needs a two-channel system")
    if x is None:
        x = np.linspace(*matching_window(system), 2001)
    V = np.array([[np.real(model.evaluate(e, x)) for e in row] for row in system.matrix])
    plus = 0.5 * (V[0, 0] + V[0, 1] + V[1, 0] + V[1, 1])
    minus = 0.5 * (V[0, 0] - V[0, 1] - V[1, 0] + V[1, 1])
    off = 0.5 * np.abs(V[0, 0] - V[0, 1] + V[1, 0] - V[1, 1])
    full = 2 * V[0, 0]
    pair1 = np.maximum(np.abs(plus - full), np.abs(minus))
    pair2 = np.maximum(np.abs(minus - full), np.abs(plus))
    thresholds_equal = system.thresholds[0] == system.thresholds[1]
    res = float(max(off.max(), min(pair1.max(), pair2.max())))
    return res if thresholds_equal else math.inf


@dataclass(frozen=True)
class TransparencyReport:
    energies: tuple
    decoupling: float
    reflection: tuple  # largest reflected amplitude per energy
    unitarity: tuple
    tol: float = 1e-6

    @property
    def passed(self) -> tuple:
        return tuple(r < self.tol for r in self.reflection)

    @property
    def transparent(self) -> bool:
        return all(self.passed)


def verify_transparent(system: ChannelSystemSpec, energies=(0.3, 1.0, 5.0), h: float = DEFAULT_H,
                       tol: float = 1e-6) -> TransparencyReport:
    """Decoupling residual and total reflection of a two-channel system."""
    model.check(system)
    refl, uni = [], []
    for E in energies:
        r = scattering_channels(system, E, h=h)
        refl.append(r.total_reflection)
        uni.append(r.unitarity_defect)
    return TransparencyReport(tuple(float(E) for E in energies), decoupling_residual(system), tuple(refl),
                              tuple(uni), tol)
