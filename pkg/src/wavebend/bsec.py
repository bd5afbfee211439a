"""
Two-channel bound state embedded in the continuum.

Channel 1 is open (threshold 0) and carries psi_1 = sin(k x) on [0, L] with
kL = n pi, zero elsewhere.  Channel 2 is closed (threshold eps_2 > E) and
carries psi_2 = A0 e^{-kappa |x|} + AL e^{-kappa |x - L|}.  Point couplings
[[0, g], [g, h]] at x = 0 and x = L supply exactly the derivative jumps
both waves need, so the state is square integrable although E lies in the
continuum of channel 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import model
from .errors import NumericalError, SpecError
from .model import ChannelSystemSpec, PointCoupling
from .propagate import WaveTrace, integrate_channels, residual_check

STRENGTHS = ("g0", "gL", "h0", "hL")


@dataclass(frozen=True)
class BsecSolution:
    L: float
    n: int
    E: float
    eps2: float
    A0: float
    AL: float
    g0: float
    gL: float
    h0: float
    hL: float

    @property
    def k(self) -> float:
        return math.sqrt(self.E)

    @property
    def kappa(self) -> float:
        return math.sqrt(self.eps2 - self.E)

    def psi(self, x):
        """Closed-form (psi_1, psi_2) at x."""
        x = np.asarray(x, dtype=float)
        inside = (x >= 0) & (x <= self.L)
        p1 = np.where(inside, np.sin(self.k * x), 0.0)
        p2 = self.A0 * np.exp(-self.kappa * np.abs(x)) + self.AL * np.exp(-self.kappa * np.abs(x - self.L))
        return p1, p2

    def dpsi(self, x, side: str = "right"):
        """Closed-form one-sided derivatives; ``side`` picks the limit at the spikes."""
        x = np.asarray(x, dtype=float)
        k, q = self.k, self.kappa
        if side == "right":
            inside = (x >= 0) & (x < self.L)
            s0, sL = np.where(x >= 0, -1.0, 1.0), np.where(x >= self.L, -1.0, 1.0)
        else:
            inside = (x > 0) & (x <= self.L)
            s0, sL = np.where(x > 0, -1.0, 1.0), np.where(x > self.L, -1.0, 1.0)
        d1 = np.where(inside, k * np.cos(k * x), 0.0)
        d2 = s0 * q * self.A0 * np.exp(-q * np.abs(x)) + sL * q * self.AL * np.exp(-q * np.abs(x - self.L))
        return d1, d2

    def as_system(self) -> ChannelSystemSpec:
        z = model.ZERO
        return ChannelSystemSpec(
            (0.0, self.eps2), ((z, z), (z, z)),
            (PointCoupling(0.0, ((0.0, self.g0), (self.g0, self.h0))),
             PointCoupling(self.L, ((0.0, self.gL), (self.gL, self.hL)))),
        )

    def detuned(self, name: str, factor: float) -> "BsecSolution":
        """Same solution record with one strength multiplied (no longer exact)."""
        if name not in STRENGTHS:
            raise SpecError(f"unknown strength {name!r}")
        return replace(self, **{name: getattr(self, name) * factor})

    def params(self) -> dict:
        return {"L": self.L, "n": self.n, "E": self.E, "eps2": self.eps2, "k": self.k, "kappa": self.kappa,
                "A0": self.A0, "AL": self.AL, "g0": self.g0, "gL": self.gL, "h0": self.h0, "hL": self.hL}


def construct(E: float | None, eps2: float, L: float = math.pi, n: int = 1, A0: float = 1.0,
              AL: float = 1.0) -> BsecSolution:
    """Solve the four jump conditions in closed form.

    g0 = k / psi_2(0), gL = k (-1)^{n+1} / psi_2(L), h0 = -2 kappa A0 / psi_2(0)
    and hL = -2 kappa AL / psi_2(L).  ``E=None`` takes E = (n pi / L)^2.
    """
    errors = []
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        errors.append("mode n must be a positive integer")
    if not L > 0:
        errors.append("L must be > 0")
    if A0 == 0 or AL == 0:
        errors.append("A0 and AL must be nonzero")
    if errors:
        raise SpecError(errors)
    if E is None:
        E = (n * math.pi / L) ** 2
    if not E > 0:
        raise SpecError("E must be > 0 (open channel 1)")
    k = math.sqrt(E)
    if abs(k * L - n * math.pi) > 1e-12 * n * math.pi:
        raise SpecError(f"support mismatch: kL = {k * L!r} is not {n} pi")
    if not eps2 > E:
        raise SpecError("channel 2 not closed: need eps2 > E")
    kappa = math.sqrt(eps2 - E)
    tail = math.exp(-kappa * L)
    p0 = A0 + AL * tail
    pL = A0 * tail + AL
    scale = max(abs(A0), abs(AL))
    if abs(p0) < 1e-12 * scale or abs(pL) < 1e-12 * scale:
        raise SpecError("closed-channel wave vanishes at a spike")
    sign = 1.0 if n % 2 else -1.0  # (-1)^{n+1}
    return BsecSolution(float(L), int(n), float(E), float(eps2), float(A0), float(AL),
                        k / p0, sign * k / pL, -2 * kappa * A0 / p0, -2 * kappa * AL / pL)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

LIMITS = {"ode": 1e-9, "jump": 1e-12, "leakage": 1e-8, "tail": 1e-3}


@dataclass(frozen=True)
class BsecReport:
    ode_residual: float
    jump_residual: float
    psi1_leakage: float  # max|psi_1| on (L, L+5] over max|psi_1| on [0, L]
    psi2_tail_deviation: float  # growing over decaying amplitude of psi_2 just past L
    tail_exponent: float
    norm2: float  # integral of psi_2^2 over the line, closed form
    kappa: float
    trace: WaveTrace

    @property
    def leakage(self) -> float:
        return max(self.psi1_leakage, self.psi2_tail_deviation)

    @property
    def tail_error(self) -> float:
        return abs(self.tail_exponent - self.kappa) / self.kappa

    @property
    def checks(self) -> dict:
        return {
            "ode": self.ode_residual < LIMITS["ode"],
            "jump": self.jump_residual < LIMITS["jump"],
            "compact_support": self.leakage < LIMITS["leakage"],
            "normalizable": bool(np.isfinite(self.norm2)) and self.tail_error < LIMITS["tail"],
        }

    @property
    def failures(self) -> tuple:
        return tuple(name for name, ok in self.checks.items() if not ok)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> dict:
        return {"ode_residual": self.ode_residual, "jump_residual": self.jump_residual,
                "psi1_leakage": self.psi1_leakage, "psi2_tail_deviation": self.psi2_tail_deviation,
                "leakage": self.leakage, "tail_exponent": self.tail_exponent, "kappa": self.kappa,
                "tail_error": self.tail_error, "norm2": self.norm2, **{f"pass_{k}": v for k, v in self.checks.items()}}


def _closed_form_trace(sol: BsecSolution, lo, hi, h):
    """Closed-form samples on uniform runs between the spikes."""
    xs, runs, count = [], [], 0
    for a, b in ((lo, 0.0), (0.0, sol.L), (sol.L, hi)):
        N = max(4, math.ceil((b - a) / h))
        x = np.linspace(a, b, N + 1)
        runs.append((count, count + N))
        xs.append(x)
        count += N + 1
    x = np.concatenate(xs)
    psi = np.column_stack(sol.psi(x))
    # left limit at the end of a run, right limit at its start
    side = np.full(x.shape, "right", dtype=object)
    for i0, i1 in runs:
        side[i1] = "left"
    dr = np.column_stack(sol.dpsi(x, "right"))
    dl = np.column_stack(sol.dpsi(x, "left"))
    dpsi = np.where((side == "left")[:, None], dl, dr)
    return WaveTrace(x, psi, dpsi, sol.E, sol.as_system(), h, tuple(runs))


def _jump_residual(sol: BsecSolution) -> float:
    worst = 0.0
    for p, g, hh in ((0.0, sol.g0, sol.h0), (sol.L, sol.gL, sol.hL)):
        p1, p2 = (float(v) for v in sol.psi(p))
        if p == 0.0:
            p1 = 0.0
        r1, r2 = (float(v) for v in sol.dpsi(p, "right"))
        l1, l2 = (float(v) for v in sol.dpsi(p, "left"))
        scale = max(1.0, abs(sol.k), abs(sol.kappa * p2))
        worst = max(worst, abs((r1 - l1) - g * p2) / scale, abs((r2 - l2) - (g * p1 + hh * p2)) / scale)
    return worst


def verify(sol: BsecSolution, margin: float = 5.0, h: float | None = None, strict: bool = False) -> BsecReport:
    """Run the four checks; with ``strict`` a failed check raises NumericalError.

    (i) ODE residual of the closed form (finite-difference psi'', scaled by
    the largest |psi''|); (ii) jump conditions at both spikes; (iii)
    shooting from -margin with psi_1 = 0 and the decaying psi_2 tail across
    both spikes to L + margin, measuring what leaks past L; (iv) the fitted
    decay rate of psi_2 beyond L against kappa.

    Past L channel 2 is free, so the shot state there splits exactly into
    e^{-kappa x} and e^{+kappa x} parts.  Their amplitude ratio is the psi_2
    leakage; sampling |psi_2 - ansatz| far out would mostly measure how
    integration error grows along the e^{+kappa x} direction.
    """
    k, q = sol.k, sol.kappa
    if h is None:
        h = min(1e-3, 5e-3 / max(k, q))
    lo, hi = -margin, sol.L + margin

    cf = _closed_form_trace(sol, lo, hi, h)
    res = residual_check(cf, sol.as_system(), sol.E)
    scale = max(k * k, q * q) * np.abs(cf.psi).max()
    ode = res.max_residual / scale

    jump = _jump_residual(sol)

    p1, p2 = sol.psi(lo)
    d1, d2 = sol.dpsi(lo)
    tr = integrate_channels(sol.as_system(), sol.E, lo, hi, ((0.0, float(p2)), (0.0, float(d2))), h)
    inside = (tr.x >= 0) & (tr.x <= sol.L)
    beyond = tr.x > sol.L + 1e-12
    psi1 = np.abs(tr.psi[:, 0])
    leak1 = float(psi1[beyond].max() / psi1[inside].max())
    # right limit at L: last sample sitting on the spike
    iL = np.nonzero(np.abs(tr.x - sol.L) <= 1e-12 * max(1.0, sol.L))[0][-1]
    p, d = tr.psi[iL, 1], tr.dpsi[iL, 1]
    grow, decay = (d + q * p) / (2 * q), (q * p - d) / (2 * q)
    leak2 = float(abs(grow) / abs(decay))

    # a few decay lengths only, before growing error can build up
    tail = beyond & (tr.x <= sol.L + min(margin, 3.0 / q))
    slope = np.polyfit(tr.x[tail], np.log(np.abs(tr.psi[tail, 1])), 1)[0]

    # int psi_2^2 for the two-exponential ansatz
    A0, AL, L = sol.A0, sol.AL, sol.L
    cross = 2 * A0 * AL * (L + 1 / q) * math.exp(-q * L)
    norm2 = (A0 * A0 + AL * AL) / q + cross

    rep = BsecReport(float(ode), float(jump), leak1, leak2, float(-slope), float(norm2), q, tr)
    if strict and rep.failures:
        raise NumericalError("BSEC verification failed: " + ", ".join(rep.failures))
    return rep
