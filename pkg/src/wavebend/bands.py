"""
Band structure of periodic potentials and the diagnostics of forbidden zones.

Everything is built on the one-period monodromy M(E) and its discriminant
D(E) = tr M / 2.  Energies with |D| <= 1 are allowed; inside a gap the two
Floquet multipliers are real, lam_+ lam_- = 1, and the corresponding
fundamental solutions grow or decay by lam on every period while their
knots stay put modulo the period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq, minimize_scalar

from . import model
from .errors import DegenerateEnergy, NoBumps, NotAGap, NumericalError, SpecError
from .propagate import DEFAULT_H, WaveTrace, find_knots, integrate_scalar, transfer_matrix

EDGE_XTOL = 1e-13
TOUCH_TOL = 1e-9


def _period(lattice) -> float:
    a = model.period_of(lattice)
    if a is None:
        raise SpecError("a periodic potential (Lattice, cosine or cexp) is required")
    model.check(lattice)
    return a


@dataclass(frozen=True)
class Monodromy:
    matrix: np.ndarray
    E: float
    start: float = 0.0

    @property
    def discriminant(self):
        D = 0.5 * np.trace(self.matrix)
        return D.real if np.iscomplexobj(D) and D.imag == 0 else D

    @property
    def det(self):
        return np.linalg.det(self.matrix)

    @property
    def multipliers(self):
        """(lam_+, lam_-) with |lam_+| >= |lam_-|."""
        return floquet_multipliers(self.matrix)


def floquet_multipliers(M):
    """Eigenvalues of 2x2 matrices (stacked or single), largest modulus first."""
    M = np.asarray(M)
    D = 0.5 * (M[..., 0, 0] + M[..., 1, 1])
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    disc = D * D - det
    if np.iscomplexobj(M) or np.any(np.asarray(disc) < 0):
        root = np.sqrt(np.asarray(disc, dtype=complex))
        a = D + root
        b = D - root
        big = np.where(np.abs(a) >= np.abs(b), a, b)
    else:
        root = np.sqrt(disc)
        big = D + np.where(D >= 0, 1.0, -1.0) * root
    # big = 0 only when both eigenvalues vanish
    safe = np.where(big == 0, 1.0, big)
    small = np.where(big == 0, 0.0, det / safe)
    if np.ndim(small) == 0:
        small, big = small[()], np.asarray(big)[()]
    return big, small


def monodromy(lattice, E, start: float = 0.0, h: float = DEFAULT_H) -> Monodromy:
    """Map (psi, psi') at ``start`` to its value one period later."""
    a = _period(lattice)
    return Monodromy(transfer_matrix(lattice, E, start, start + a, h), E, start)


def discriminant(lattice, energies, start: float = 0.0, h: float = DEFAULT_H) -> np.ndarray:
    a = _period(lattice)
    M = transfer_matrix(lattice, np.atleast_1d(energies), start, start + a, h)
    D = 0.5 * (M[:, 0, 0] + M[:, 1, 1])
    if np.iscomplexobj(D) and not np.any(D.imag != 0):
        D = D.real
    return D


def _eigvec(M, lam):
    """Eigenvector of a 2x2 matrix for eigenvalue lam, unit norm."""
    v1 = np.array([M[0, 1], lam - M[0, 0]])
    v2 = np.array([lam - M[1, 1], M[1, 0]])
    v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
    nv = np.linalg.norm(v)
    if nv < 1e-14:
        return np.array([1.0, 0.0])
    return v / nv


# ---------------------------------------------------------------------------
# zone scan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Zone:
    kind: str  # "band" or "gap"
    lower: float
    upper: float
    lower_is_edge: bool = True
    upper_is_edge: bool = True

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def interior(self) -> bool:
        return self.lower_is_edge and self.upper_is_edge


@dataclass(frozen=True)
class ZoneReport:
    """Alternating bands and gaps tiling [emin, emax].

    Gaps are stored as [E_<, E_>].  Touching bands appear as zero-width gaps.
    A zone cut by the scan range has the corresponding ``*_is_edge`` False.
    """

    emin: float
    emax: float
    zones: tuple
    scan_step: float
    tol: float = EDGE_XTOL
    warnings: tuple = ()

    @property
    def bands(self):
        return [z for z in self.zones if z.kind == "band"]

    @property
    def gaps(self):
        return [z for z in self.zones if z.kind == "gap"]

    @property
    def open_gaps(self):
        """Gaps with both edges inside the scan and nonzero width."""
        return [z for z in self.gaps if z.interior and z.width > 0]

    def gap(self, index: int = 0) -> Zone:
        gaps = self.open_gaps
        if index >= len(gaps):
            raise NotAGap(f"no open gap with index {index} in [{self.emin}, {self.emax}]")
        return gaps[index]


def _bisect(fun, lo, hi, xtol):
    """Vectorised bisection of sign changes of fun on brackets [lo, hi]."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    if lo.size == 0:
        return lo
    flo = fun(lo)
    for _ in range(200):
        if np.all(hi - lo <= xtol * np.maximum(1.0, np.abs(lo))):
            break
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def _golden_max(fun, lo, hi, iters=90):
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    r = (math.sqrt(5) - 1) / 2
    c = hi - r * (hi - lo)
    d = lo + r * (hi - lo)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        left = fc > fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        c_new = hi - r * (hi - lo)
        d_new = lo + r * (hi - lo)
        c, d = c_new, d_new
        fc, fd = fun(c), fun(d)
    x = 0.5 * (lo + hi)
    return x, fun(x)


def zone_edges(lattice, emin: float, emax: float, scan_step: float | None = None,
               h: float = DEFAULT_H) -> ZoneReport:
    """Scan D(E) on a grid, bisect every |D| = 1 crossing and label the zones.

    The default step is (emax - emin)/2000, which is also the resolution
    below which two edges cannot be told apart by sign changes; local maxima
    of |D| are refined separately so that touching bands and gaps narrower
    than the step are still found (and flagged).
    """
    if not emax > emin:
        raise SpecError("zone scan needs emin < emax")
    if model.is_complex(lattice):
        raise SpecError("complex lattices are handled by cxperiodic")
    _period(lattice)
    step = (emax - emin) / 2000 if scan_step is None else float(scan_step)
    if not step > 0:
        raise SpecError("scan step must be > 0")
    npts = max(2, math.ceil((emax - emin) / step - 1e-9)) + 1
    grid = np.linspace(emin, emax, npts)

    def D(E):
        return np.real(discriminant(lattice, E, h=h))

    Dg = D(grid)
    warnings = []
    edges = []
    for shift in (1.0, -1.0):
        f = Dg - shift
        s = np.sign(f)
        lo, hi = [], []
        for i in range(npts - 1):
            if s[i] * s[i + 1] < 0:
                lo.append(grid[i])
                hi.append(grid[i + 1])
            elif s[i + 1] == 0 and 0 < i + 1 < npts - 1 and s[i] * s[i + 2] < 0:
                edges.append(grid[i + 1])
        edges += list(_bisect(lambda E, sh=shift: D(E) - sh, lo, hi, EDGE_XTOL))

    # interior local maxima of |D| that stay <= 1 on the grid
    A = np.abs(Dg)
    cand = [i for i in range(1, npts - 1) if A[i] >= A[i - 1] and A[i] >= A[i + 1] and 0.5 < A[i] <= 1.0]
    touching = []
    if cand:
        xs, peaks = _golden_max(lambda E: np.abs(D(E)), grid[[i - 1 for i in cand]], grid[[i + 1 for i in cand]])
        for i, xp, pk in zip(cand, xs, peaks):
            if pk > 1.0 + 1e-12:
                sh = 1.0 if D(np.array([xp]))[0] > 0 else -1.0
                left = _bisect(lambda E, sh=sh: D(E) - sh, [grid[i - 1]], [xp], EDGE_XTOL)[0]
                right = _bisect(lambda E, sh=sh: D(E) - sh, [xp], [grid[i + 1]], EDGE_XTOL)[0]
                if not any(abs(e - left) < 10 * EDGE_XTOL * max(1, abs(left)) for e in edges):
                    edges += [left, right]
                    warnings.append(f"gap [{left!r}, {right!r}] is narrower than the scan step")
            elif pk >= 1.0 - TOUCH_TOL:
                touching.append(float(xp))

    edges = sorted(set(float(e) for e in edges))
    for a_, b_ in zip(edges, edges[1:]):
        if b_ - a_ < step:
            warnings.append(f"edges {a_!r} and {b_!r} fall in one scan cell")

    events = sorted([(e, "edge") for e in edges] + [(t, "touch") for t in touching])
    zones = []
    cur, cur_edge = float(emin), False

    def push(kind, lo, hi, lo_edge, hi_edge):
        if zones and zones[-1].kind == kind and zones[-1].width > 0 and hi - lo > 0:
            z = zones.pop()
            zones.append(Zone(kind, z.lower, hi, z.lower_is_edge, hi_edge))
        else:
            zones.append(Zone(kind, lo, hi, lo_edge, hi_edge))

    def kind_of(lo, hi):
        return "gap" if abs(D(np.array([0.5 * (lo + hi)]))[0]) > 1.0 else "band"

    for e, what in events:
        if e <= cur:
            if what == "touch" and e == cur and zones:
                pass
            else:
                continue
        if e > cur:
            push(kind_of(cur, e), cur, e, cur_edge, True)
        if what == "touch":
            zones.append(Zone("gap", e, e, True, True))
        cur, cur_edge = e, True
    if emax > cur:
        push(kind_of(cur, emax), cur, float(emax), cur_edge, False)
    return ZoneReport(float(emin), float(emax), tuple(zones), step, EDGE_XTOL, tuple(warnings))


# ---------------------------------------------------------------------------
# solutions inside a gap
# ---------------------------------------------------------------------------

def _period_states(trace: WaveTrace, start, a, n):
    """Right-limit states at start + j a, j = 0..n."""
    out = []
    for j in range(n + 1):
        xj = start + j * a
        near = np.nonzero(np.abs(trace.x - xj) <= 1e-9 * max(1.0, abs(xj)))[0]
        i = near[-1] if near.size else int(np.argmin(np.abs(trace.x - xj)))
        out.append(np.array([trace.psi[i, 0], trace.dpsi[i, 0]]))
    return np.array(out)


def _ratio_errors(states, lam):
    errs = []
    for s0, s1 in zip(states[:-1], states[1:]):
        r = np.vdot(s0, s1) / np.vdot(s0, s0)
        errs.append(abs(r - lam) / abs(lam))
    return np.array(errs)


def translation_deviation(knots, a: float, lo: float, hi: float) -> float:
    """max over knots k (with k + a inside [lo, hi]) of the distance from k + a to the knot set."""
    knots = np.asarray(knots)
    worst = 0.0
    for k in knots:
        target = k + a
        if target > hi + 1e-9 * max(1.0, abs(hi)):
            continue
        if target < lo:
            continue
        worst = max(worst, float(np.min(np.abs(knots - target))) if knots.size else math.inf)
    return worst


@dataclass(frozen=True)
class GapSolutionPair:
    E: float
    start: float
    period: float
    growing: WaveTrace
    decaying: WaveTrace
    lam_plus: float
    lam_minus: float
    growth_ratio_error: float
    knot_shift_error: float
    knots_growing: np.ndarray = field(repr=False)
    knots_decaying: np.ndarray = field(repr=False)

    @property
    def knot_spacing(self) -> np.ndarray:
        return np.diff(self.knots_growing)


def gap_solutions(lattice, E: float, n_periods: int = 10, start: float = 0.0,
                  h: float = DEFAULT_H, check: bool = True) -> GapSolutionPair:
    """Growing and decaying Floquet solutions at an energy inside a gap.

    Each is started from an eigenvector of M(E) at ``start`` and integrated
    over ``n_periods``.  With ``check`` the per-period amplitude ratio must
    equal its multiplier to 1e-6 and the knot set must be invariant under a
    shift by one period to 1e-6 (relative to the period).  At a band edge
    the two coincide with the (anti)periodic solution, lam = +-1.
    """
    a = _period(lattice)
    mono = monodromy(lattice, E, start, h)
    M = np.real_if_close(mono.matrix, tol=1)
    D = float(np.real(mono.discriminant))
    if abs(D) < 1.0 - 1e-9:
        raise NotAGap(f"E = {E!r} lies in an allowed zone (D = {D!r})")
    lam_p, lam_m = floquet_multipliers(M)
    lam_p, lam_m = float(np.real(lam_p)), float(np.real(lam_m))
    if abs(D) <= 1.0 + 1e-12:
        lam_p = lam_m = math.copysign(1.0, D)
    vp = _eigvec(M, lam_p)
    vm = _eigvec(M, lam_m)
    vp = vp * np.sign(vp[1] if abs(vp[1]) > 1e-12 else vp[0])
    vm = vm * np.sign(vm[1] if abs(vm[1]) > 1e-12 else vm[0])
    end = start + n_periods * a
    grow = integrate_scalar(lattice, E, start, end, (vp[0], vp[1]), h)
    decay = integrate_scalar(lattice, E, start, end, (vm[0], vm[1]), h)

    err = max(_ratio_errors(_period_states(grow, start, a, n_periods), lam_p).max(),
              _ratio_errors(_period_states(decay, start, a, n_periods), lam_m).max())
    kg = find_knots(grow)
    kd = find_knots(decay)
    shift = max(translation_deviation(kg, a, start, end), translation_deviation(kd, a, start, end))
    if check:
        if err > 1e-6:
            raise NumericalError(f"per-period growth deviates from the multiplier by {err:.3g}")
        if shift > 1e-6 * a:
            raise NumericalError(f"knot set not translation invariant (deviation {shift:.3g})")
    return GapSolutionPair(E, start, a, grow, decay, lam_p, lam_m, float(err), float(shift), kg, kd)


def anchored_solution(lattice, E: float, x0: float, n_periods: int = 3, h: float = DEFAULT_H) -> WaveTrace:
    """Solution with a knot pinned at x0 (psi(x0) = 0, psi'(x0) = 1).

    Moving x0 across the cell shifts the bumps relative to barriers and wells.
    """
    a = _period(lattice)
    return integrate_scalar(lattice, E, x0, x0 + n_periods * a, (0.0, 1.0), h)


# ---------------------------------------------------------------------------
# bumps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpMetrics:
    left: float
    right: float
    length: float
    norm: float  # int psi^2
    gradient: float  # int psi'^2
    kinetic: float  # int (E - V) psi^2, spikes included
    avg_kinetic: float
    identity_error: float  # |kinetic - gradient| / gradient


def _bump_integrals(tr: WaveTrace, lattice, E):
    psi = np.real(tr.psi[:, 0])
    dpsi = np.real(tr.dpsi[:, 0])
    V = np.real(model.evaluate(lattice, tr.x))
    norm = grad = kin = 0.0
    for i0, i1 in tr.runs:
        sl = slice(i0, i1 + 1)
        x = tr.x[sl]
        # inside a run V is constant or smooth; take piecewise values at the midpoint
        if not model.is_smooth(lattice):
            v = np.full(x.shape, np.real(model.evaluate(lattice, 0.5 * (x[0] + x[-1]))))
        else:
            v = V[sl]
        norm += simpson(psi[sl] ** 2, x=x)
        grad += simpson(dpsi[sl] ** 2, x=x)
        kin += simpson((E - v) * psi[sl] ** 2, x=x)
    # spike contributions -g psi(p)^2 = -(jump in psi') psi(p)
    dup = np.nonzero(np.diff(tr.x) == 0)[0]
    for i in dup:
        kin -= (dpsi[i + 1] - dpsi[i]) * psi[i]
    return norm, grad, kin


def bump_metrics(trace: WaveTrace, lattice=None, h: float | None = None) -> list[BumpMetrics]:
    """Per-bump integrals between consecutive knots of a real scalar trace.

    Each bump is re-integrated from its left knot so the quadrature (composite
    Simpson per smooth stretch) starts and ends exactly on knots.
    """
    lattice = trace.spec if lattice is None else lattice
    if not trace.is_real:
        raise NoBumps("bumps need a real trace")
    knots = find_knots(trace)
    if len(knots) < 2:
        raise NoBumps("no bumps: fewer than two knots")
    E = float(np.real(trace.E))
    h = trace.h if h is None else h
    out = []
    for ka, kb in zip(knots[:-1], knots[1:]):
        psi0, dpsi0 = trace.state_at(ka, 0)
        tr = integrate_scalar(lattice, E, ka, kb, (0.0 * np.real(psi0), np.real(dpsi0)), h)
        norm, grad, kin = _bump_integrals(tr, lattice, E)
        out.append(BumpMetrics(float(ka), float(kb), float(kb - ka), float(norm), float(grad), float(kin),
                               float(kin / norm), float(abs(kin - grad) / abs(grad))))
    return out


# ---------------------------------------------------------------------------
# permanent resonance across a gap
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResonanceReport:
    gap: tuple
    period: float
    rows: tuple  # dicts, one per sampled energy
    edge_lambda: tuple  # |lam_+| at the lower and upper edge
    claims: dict

    columns = ("E", "lam_plus", "growth_ratio_error", "knot_shift_error", "knot_spacing_mean",
               "knot_spacing_max_dev", "bumps", "avg_kinetic_mean", "avg_kinetic_spread",
               "identity_error_max")


def _gap_bounds(gap):
    if isinstance(gap, Zone):
        return gap.lower, gap.upper
    lo, hi = gap
    return float(lo), float(hi)


def permanent_resonance_report(lattice, gap, m: int = 11, n_periods: int = 10, start: float = 0.0,
                               h: float = DEFAULT_H) -> ResonanceReport:
    """Knot, growth and bump statistics at ``m`` energies strictly inside a gap."""
    a = _period(lattice)
    lo, hi = _gap_bounds(gap)
    if not hi > lo:
        raise NotAGap("gap has zero width")
    energies = lo + (hi - lo) * np.arange(1, m + 1) / (m + 1)
    rows = []
    for E in energies:
        pair = gap_solutions(lattice, float(E), n_periods, start, h, check=False)
        sp = pair.knot_spacing
        bumps = bump_metrics(pair.growing, lattice, h)
        avg = np.array([b.avg_kinetic for b in bumps])
        rows.append({
            "E": float(E),
            "lam_plus": abs(pair.lam_plus),
            "growth_ratio_error": pair.growth_ratio_error,
            "knot_shift_error": pair.knot_shift_error,
            "knot_spacing_mean": float(sp.mean()) if sp.size else math.nan,
            "knot_spacing_max_dev": float(np.abs(sp - a).max()) if sp.size else math.nan,
            "bumps": len(bumps),
            "avg_kinetic_mean": float(avg.mean()),
            "avg_kinetic_spread": float(avg.max() - avg.min()),
            "identity_error_max": float(max(b.identity_error for b in bumps)),
        })
    edge = tuple(float(abs(monodromy(lattice, e, start, h).multipliers[0])) for e in (lo, hi))
    claims = {
        "knots_translation_invariant": all(r["knot_shift_error"] < 1e-5 * a for r in rows),
        "growth_equals_multiplier": all(r["growth_ratio_error"] < 1e-5 for r in rows),
        "lambda_above_one_inside": all(r["lam_plus"] > 1 + 1e-6 for r in rows),
        "lambda_to_one_at_edges": all(abs(v - 1) < 1e-4 for v in edge),
        "knot_spacing_equals_period": all(r["knot_spacing_max_dev"] < 1e-5 * a for r in rows),
        "bump_identity": all(r["identity_error_max"] < 1e-7 for r in rows),
    }
    avg = np.array([r["avg_kinetic_mean"] for r in rows])
    claims["avg_kinetic_across_gap_spread"] = float(avg.max() - avg.min())
    return ResonanceReport((lo, hi), a, tuple(rows), edge, claims)


# ---------------------------------------------------------------------------
# beating in allowed zones
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BeatingReport:
    E: float
    theta: float  # Floquet phase per period, arccos D
    multiplier_abs: tuple
    envelope: np.ndarray  # sqrt(psi^2 + (psi'/q)^2) at each period start
    max_abs: np.ndarray  # sampled max |psi| inside each period
    envelope_ratio: float
    beat_period: float  # in periods, measured
    predicted_period: float  # pi / min(theta, pi - theta)

    @property
    def relative_error(self) -> float:
        return abs(self.beat_period - self.predicted_period) / self.predicted_period


def _measure_period(u):
    """Period (in samples) of the dominant oscillation of a sequence."""
    u = np.asarray(u, dtype=float) - np.mean(u)
    n = len(u)
    if n < 8 or np.ptp(u) <= 1e-12 * max(1.0, np.abs(u).max()):
        return math.nan
    ac = np.correlate(u, u, "full")[n - 1:] / (n - np.arange(n))
    ac = ac / ac[0]
    guess = None
    neg = np.nonzero(ac < 0)[0]
    if neg.size:
        for L in range(neg[0] + 1, n // 2):
            if ac[L] >= ac[L - 1] and ac[L] >= ac[L + 1] and ac[L] > 0:
                guess = 2 * math.pi / L
                break
    if guess is None:
        w = np.linspace(1e-3, math.pi, 4096)
        j = np.arange(n)
        power = np.abs(np.exp(-1j * np.outer(w, j)) @ u)
        guess = w[int(np.argmax(power))]
    j = np.arange(n)

    def resid(w):
        X = np.column_stack([np.cos(w * j), np.sin(w * j), np.ones(n)])
        coef, *_ = np.linalg.lstsq(X, u, rcond=None)
        return float(np.sum((X @ coef - u) ** 2))

    lo, hi = max(1e-6, 0.7 * guess), min(math.pi, 1.3 * guess)
    w = np.linspace(lo, hi, 400)
    r = np.array([resid(x) for x in w])
    k = int(np.argmin(r))
    res = minimize_scalar(resid, bounds=(w[max(k - 1, 0)], w[min(k + 1, len(w) - 1)]), method="bounded",
                          options={"xatol": 1e-12})
    return 2 * math.pi / res.x


def beating_envelope(lattice, E: float, n_periods: int = 100, start: float = 0.0, init=(1.0, 0.0),
                     h: float = DEFAULT_H) -> BeatingReport:
    """Per-period amplitude of a generic real solution in an allowed zone.

    The envelope is the phase-space amplitude sqrt(psi^2 + psi'^2/E) at the
    start of each period.  Its square oscillates at twice the Floquet phase
    folded into [0, pi], so the predicted beat period is pi / min(theta, pi - theta)
    periods.
    """
    a = _period(lattice)
    mono = monodromy(lattice, E, start, h)
    D = float(np.real(mono.discriminant))
    if abs(D) > 1.0:
        raise NotAGap(f"E = {E!r} is in a forbidden zone (D = {D!r})")
    if abs(D) >= 1.0 - 1e-9:
        raise DegenerateEnergy("degenerate, no beating: E is at a zone edge")
    theta = math.acos(D)
    lp, lm = mono.multipliers
    tr = integrate_scalar(lattice, E, start, start + n_periods * a, init, h)
    st = _period_states(tr, start, a, n_periods)
    q = math.sqrt(E) if E > 0 else 1.0
    env = np.sqrt(np.abs(st[:, 0]) ** 2 + np.abs(st[:, 1] / q) ** 2)
    mx = []
    for j in range(n_periods):
        sel = (tr.x >= start + j * a) & (tr.x <= start + (j + 1) * a)
        mx.append(np.abs(tr.psi[sel, 0]).max())
    delta = min(theta, math.pi - theta)
    return BeatingReport(
        E=float(E), theta=theta, multiplier_abs=(float(abs(lp)), float(abs(lm))), envelope=env,
        max_abs=np.array(mx), envelope_ratio=float(env.max() / env.min()),
        beat_period=_measure_period(env ** 2), predicted_period=math.pi / delta,
    )


# ---------------------------------------------------------------------------
# Tamm surface states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TammResult:
    roots: tuple
    wall: float
    gap: tuple
    scan: np.ndarray  # (samples, 2): E, f(E)
    switches: tuple  # energies where the sign convention changed (poles, not roots)
    edge_values: tuple

    @property
    def count(self) -> int:
        return len(self.roots)


def _decaying_component(M, force_psi_positive=False):
    lam_p, lam_m = floquet_multipliers(M)
    v = _eigvec(M, np.real(lam_m))
    v = np.real(v)
    if abs(v[1]) > 1e-8 and not force_psi_positive:
        return v[0] * np.sign(v[1]), False
    return abs(v[0]), True


def tamm_search(lattice, gap, wall: float | None = None, samples: int = 1000,
                h: float = DEFAULT_H) -> TammResult:
    """Energies in the open gap where a knot of the right-decaying Floquet
    solution sits on an impenetrable wall at ``wall`` (default: a quarter
    period into the cell).

    f(E) is the psi-component of the unit decaying eigenvector of the
    monodromy taken from the wall, signed so that its psi'-component is
    positive; sign flips of f caused by that convention are recorded in
    ``switches`` and not reported as roots.
    """
    a = _period(lattice)
    lo, hi = _gap_bounds(gap)
    wall = a / 4 if wall is None else float(wall)
    Es = np.linspace(lo, hi, samples + 2)[1:-1]
    Ms = np.real(transfer_matrix(lattice, Es, wall, wall + a, h))
    fs = np.array([_decaying_component(M)[0] for M in Ms])

    def f(E):
        return _decaying_component(np.real(transfer_matrix(lattice, E, wall, wall + a, h)))[0]

    roots, switches = [], []
    for i in range(len(Es) - 1):
        if fs[i] == 0:
            roots.append(float(Es[i]))
            continue
        if np.sign(fs[i]) == np.sign(fs[i + 1]) or fs[i + 1] == 0:
            continue
        r = brentq(f, Es[i], Es[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        if abs(f(r)) < 1e-8:
            roots.append(float(r))
        else:
            switches.append(float(r))
    edges = (float(f(lo)), float(f(hi)))
    return TammResult(tuple(roots), wall, (lo, hi), np.column_stack([Es, fs]), tuple(switches), edges)


@dataclass(frozen=True)
class TammCheck:
    E: float
    amplitudes: np.ndarray  # max |psi| per period
    lam_minus: float
    decays: bool
    bounded: bool
    rate_error: float  # relative deviation of the early per-period decay from |lam_-|


def verify_tamm(lattice, E: float, wall: float | None = None, n_periods: int = 20,
                h: float = DEFAULT_H) -> TammCheck:
    """Integrate psi(wall) = 0, psi'(wall) = 1 to the right and check it decays."""
    a = _period(lattice)
    wall = a / 4 if wall is None else float(wall)
    tr = integrate_scalar(lattice, E, wall, wall + n_periods * a, (0.0, 1.0), h)
    amps = []
    for j in range(n_periods):
        sel = (tr.x >= wall + j * a) & (tr.x <= wall + (j + 1) * a)
        amps.append(np.abs(tr.psi[sel, 0]).max())
    amps = np.array(amps)
    lam_m = abs(monodromy(lattice, E, wall, h).multipliers[1])
    st = _period_states(tr, wall, a, n_periods)
    # early periods only: any residual growing component takes over later
    m = max(1, n_periods // 4)
    rate = (np.linalg.norm(st[m]) / np.linalg.norm(st[0])) ** (1.0 / m)
    return TammCheck(
        E=float(E), amplitudes=amps, lam_minus=float(lam_m),
        decays=bool(np.all(np.diff(amps) < 0)),
        bounded=bool(amps.max() <= amps[0] * (1 + 1e-9)),
        rate_error=float(abs(rate - lam_m) / lam_m),
    )
