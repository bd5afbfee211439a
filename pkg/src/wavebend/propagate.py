"""
Stationary propagation of scalar and coupled-channel wave equations.

The state of n channels is the vector y = (psi_1..psi_n, psi_1'..psi_n'),
so that y' = A(x) y with

    A = [[0, I], [V(x) - diag(E - eps), 0]].

Piecewise-constant stretches are crossed exactly (cos/sin, cosh/sinh or a
matrix exponential when the channels are coupled there), smooth analytic
entries with classical fixed-step RK4, and delta spikes as derivative
jumps psi' -> psi' + G psi.  A delta sitting at the starting point of a
forward run is taken to be already crossed: states are right limits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from . import model
from .errors import AmplitudeOverflow, KnotsUndefined, SpecError
from .model import ChannelSystemSpec, as_system, evaluate, is_smooth

DEFAULT_H = 1e-3
OVERFLOW = 1e200
RESCALE_AT = 1e100
KNOT_RTOL = 1e-12

TOWARD, NEUTRAL, FROM = 1, 0, -1


@dataclass(frozen=True)
class WaveState:
    psi: np.ndarray
    dpsi: np.ndarray
    x: float = 0.0
    E: complex | float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "psi", np.atleast_1d(np.asarray(self.psi)))
        object.__setattr__(self, "dpsi", np.atleast_1d(np.asarray(self.dpsi)))
        if self.psi.shape != self.dpsi.shape:
            raise SpecError("psi and dpsi must have one entry per channel")

    @property
    def n(self) -> int:
        return self.psi.shape[0]

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.psi, self.dpsi])


def _as_state(init, n) -> np.ndarray:
    if isinstance(init, WaveState):
        y = init.vector
    else:
        psi, dpsi = init
        y = np.concatenate([np.atleast_1d(psi), np.atleast_1d(dpsi)])
    if y.shape != (2 * n,):
        raise SpecError(f"initial state has {y.shape[0] // 2} channels, system has {n}")
    if not np.all(np.isfinite(y)):
        raise SpecError("initial state must be finite")
    return y


# ---------------------------------------------------------------------------
# elementary steps
# ---------------------------------------------------------------------------

def _cos_sinc(k2, w):
    """c = cos(k w), S = sin(k w)/k for k = sqrt(k2), continued through k2 <= 0."""
    k2 = np.asarray(k2)
    w = np.asarray(w, dtype=float)
    k2, w = np.broadcast_arrays(k2, w)
    with np.errstate(all="ignore"):
        if np.iscomplexobj(k2) and np.any(k2.imag != 0):
            k = np.sqrt(k2.astype(complex))
            zero = k == 0
            ks = np.where(zero, 1.0, k)
            c = np.cos(k * w)
            s = np.where(zero, w, np.sin(k * w) / ks)
            return c, s
        k2 = k2.real.astype(float)
        pos = k2 > 0
        neg = k2 < 0
        k = np.sqrt(np.where(pos, k2, 1.0))
        kap = np.sqrt(np.where(neg, -k2, 1.0))
        c = np.where(pos, np.cos(k * w), np.where(neg, np.cosh(kap * w), 1.0))
        s = np.where(pos, np.sin(k * w) / k, np.where(neg, np.sinh(kap * w) / kap, w))
        return c, s


def step_constant(s: WaveState, k2, w: float) -> WaveState:
    """Exact propagation over width ``w`` at constant local kinetic energy ``k2 = E - V``."""
    if not w > 0:
        raise SpecError("step width must be > 0")
    c, sn = _cos_sinc(k2, w)
    psi = c * s.psi + sn * s.dpsi
    dpsi = -np.asarray(k2) * sn * s.psi + c * s.dpsi
    return WaveState(psi, dpsi, s.x + w, s.E)


def apply_delta(s: WaveState, g) -> WaveState:
    """Cross a spike of strength ``g`` (scalar or n x n matrix): psi' -> psi' + g psi."""
    g = np.asarray(g)
    jump = g @ s.psi if g.ndim == 2 else g * s.psi
    return WaveState(s.psi.copy(), s.dpsi + jump, s.x, s.E)


# ---------------------------------------------------------------------------
# decomposition of an interval into pieces
# ---------------------------------------------------------------------------

class _Medium:
    """A channel system prepared for propagation."""

    def __init__(self, spec):
        system = as_system(spec)
        model.check(system)
        self.spec = spec
        self.system = system
        self.n = system.n
        self.eps = np.array(system.thresholds, dtype=float)
        self.entries = system.matrix
        self.smooth = any(is_smooth(e) for row in self.entries for e in row)
        self.complex = model.is_complex(system)

    def matrix(self, x, mid=None) -> np.ndarray:
        """V at ``x``; piecewise entries are read at ``mid`` when given, so
        that nodes on a piece's edges see the piece's own constant value."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        dtype = complex if self.complex else float
        out = np.zeros((x.shape[0], self.n, self.n), dtype=dtype)
        for a, row in enumerate(self.entries):
            for b, e in enumerate(row):
                if isinstance(e, model.Analytic) and e.form == "zero":
                    continue
                if mid is not None and not is_smooth(e):
                    out[:, a, b] = evaluate(e, mid)
                else:
                    out[:, a, b] = evaluate(e, x)
        return out

    def pieces(self, lo: float, hi: float):
        """Forward pieces covering [lo, hi]; spikes in (lo, hi] are included."""
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        pts = [lo, hi]
        spikes = []
        for a, row in enumerate(self.entries):
            for b, e in enumerate(row):
                pts += [p for p in model.breakpoints_between(e, lo, hi) if lo < p < hi]
                spikes += [(p, a, b, g) for p, g in model.spikes_between(e, lo, hi, tol)]
        for pc in self.system.point_couplings:
            if lo + tol < pc.position <= hi + tol:
                g = pc.matrix()
                spikes += [(pc.position, a, b, g[a, b]) for a in range(self.n) for b in range(self.n)]
        pts += [p for p, *_ in spikes]
        pts = sorted(pts)
        merged = [lo]
        for p in pts:
            if p - merged[-1] > tol:
                merged.append(p)
        if hi - merged[-1] > tol:
            merged.append(hi)
        else:
            merged[-1] = hi
        deltas = {}
        for p, a, b, g in spikes:
            j = int(np.argmin(np.abs(np.array(merged) - p)))
            G = deltas.setdefault(j, np.zeros((self.n, self.n), dtype=complex))
            G[a, b] += g
        out = []
        for j in range(1, len(merged)):
            xa, xb = merged[j - 1], merged[j]
            if self.smooth:
                out.append(("smooth", xa, xb, None))
            else:
                out.append(("const", xa, xb, self.matrix(0.5 * (xa + xb))[0]))
            if j in deltas:
                G = deltas[j]
                if not np.any(G.imag != 0):
                    G = G.real
                out.append(("delta", xb, xb, G))
        return out


def _medium(spec) -> _Medium:
    return spec if isinstance(spec, _Medium) else _Medium(spec)


# ---------------------------------------------------------------------------
# transfer matrices (batched over energy)
# ---------------------------------------------------------------------------

def _const_transfer(med: _Medium, V, E, w):
    """(nE, 2n, 2n) exact propagators over width w at energies E."""
    n = med.n
    nE = E.shape[0]
    off = V - np.diag(np.diag(V))
    if n == 1 or not np.any(off != 0):
        k2 = E[:, None] - med.eps[None, :] - np.diag(V)[None, :]
        c, s = _cos_sinc(k2, w)
        dtype = np.result_type(c, s, k2)
        M = np.zeros((nE, 2 * n, 2 * n), dtype=dtype)
        idx = np.arange(n)
        M[:, idx, idx] = c
        M[:, idx, n + idx] = s
        M[:, n + idx, idx] = -k2 * s
        M[:, n + idx, n + idx] = c
        return M
    A = np.zeros((nE, 2 * n, 2 * n), dtype=np.result_type(V, E, float))
    A[:, :n, n:] = np.eye(n)
    A[:, n:, :n] = V[None] - _kinetic_diag(med, E)
    return expm(A * w)


def _kinetic_diag(med, E):
    kin = E[:, None] - med.eps[None, :]
    out = np.zeros((E.shape[0], med.n, med.n), dtype=kin.dtype)
    idx = np.arange(med.n)
    out[:, idx, idx] = kin
    return out


def _rk4_nodes(xa, xb, h):
    N = max(1, math.ceil(abs(xb - xa) / h - 1e-9))
    return N, (xb - xa) / N


def _rk4_steps(med: _Medium, E, xa, xb, h):
    """RK4 one-step matrices R[e, i] with y_{i+1} = R y_i, shape (nE, N, 2n, 2n)."""
    n = med.n
    d = 2 * n
    N, dx = _rk4_nodes(xa, xb, h)
    xs = xa + dx * np.arange(N + 1)
    mid = 0.5 * (xa + xb)
    Vn = med.matrix(xs, mid)
    Vm = med.matrix(xs[:-1] + 0.5 * dx, mid)
    if n == 1:
        # closed form of the RK4 step for A = [[0, 1], [q, 0]]
        k = (E - med.eps[0])[:, None]
        q0, qm, q1 = Vn[None, :-1, 0, 0] - k, Vm[None, :, 0, 0] - k, Vn[None, 1:, 0, 0] - k
        R = np.empty(q0.shape + (2, 2), dtype=np.result_type(q0, float))
        h2, h3, h4 = dx * dx, dx ** 3, dx ** 4
        R[..., 0, 0] = 1 + h2 * (q0 / 6 + qm / 3) + h4 * q0 * qm / 24
        R[..., 0, 1] = dx + h3 * qm / 6
        R[..., 1, 0] = dx * (q0 + q1 + 4 * qm) / 6 + h3 * qm * (q0 + q1) / 12
        R[..., 1, 1] = 1 + h2 * (q1 / 6 + qm / 3) + h4 * q1 * qm / 24
        return R, xs
    kin = _kinetic_diag(med, E)  # (nE, n, n)
    dtype = np.result_type(Vn, kin, float)

    def A(V):
        out = np.zeros((E.shape[0], V.shape[0], d, d), dtype=dtype)
        out[:, :, :n, n:] = np.eye(n)
        out[:, :, n:, :n] = V[None] - kin[:, None]
        return out

    A0, Am, A1 = A(Vn[:-1]), A(Vm), A(Vn[1:])
    eye = np.eye(d)
    K2 = Am @ (eye + 0.5 * dx * A0)
    K3 = Am @ (eye + 0.5 * dx * K2)
    K4 = A1 @ (eye + dx * K3)
    return eye + (dx / 6.0) * (A0 + 2.0 * K2 + 2.0 * K3 + K4), xs


def _chain_product(R):
    """Ordered product R[:, N-1] ... R[:, 0] by pairwise reduction."""
    while R.shape[1] > 1:
        N = R.shape[1]
        even = N - N % 2
        P = R[:, 1:even:2] @ R[:, 0:even:2]
        if N % 2:
            P = np.concatenate([P, R[:, -1:]], axis=1)
        R = P
    return R[:, 0]


def _smooth_transfer(med, E, xa, xb, h):
    N, _ = _rk4_nodes(xa, xb, h)
    d = 2 * med.n
    chunk = max(1, int(2_000_000 // (N * d * d)))
    out = []
    for i in range(0, E.shape[0], chunk):
        R, _ = _rk4_steps(med, E[i:i + chunk], xa, xb, h)
        out.append(_chain_product(R))
    return np.concatenate(out, axis=0)


def _delta_transfer(n, G, sign=1.0):
    d = 2 * n
    J = np.eye(d, dtype=np.result_type(G, float))
    J[n:, :n] = sign * G
    return J


def _oriented_pieces(med, x0, x1):
    if x1 >= x0:
        return [(kind, xa, xb, data, 1.0) for kind, xa, xb, data in med.pieces(x0, x1)]
    out = []
    for kind, xa, xb, data in reversed(med.pieces(x1, x0)):
        out.append((kind, xb, xa, data, -1.0))
    return out


def transfer_matrix(spec, E, x0: float, x1: float, h: float = DEFAULT_H) -> np.ndarray:
    """Fundamental matrix mapping y(x0) to y(x1); x1 < x0 propagates backwards.

    ``E`` may be a scalar or a 1-D array; for an array the result is stacked
    along the first axis.
    """
    med = _medium(spec)
    Es = np.atleast_1d(np.asarray(E))
    if Es.ndim != 1:
        raise SpecError("energies must be a scalar or a 1-D array")
    d = 2 * med.n
    M = np.broadcast_to(np.eye(d), (Es.shape[0], d, d)).copy()
    for kind, xa, xb, data, sign in _oriented_pieces(med, float(x0), float(x1)):
        if kind == "delta":
            P = _delta_transfer(med.n, data, sign)[None]
        elif kind == "const":
            P = _const_transfer(med, data, Es, xb - xa)
        else:
            P = _smooth_transfer(med, Es, xa, xb, h)
        M = P @ M
    if np.iscomplexobj(M) and not np.any(M.imag != 0) and not np.iscomplexobj(Es):
        M = M.real
    return M[0] if np.ndim(E) == 0 else M


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaveTrace:
    """Sampled solution at fixed energy.

    ``psi`` and ``dpsi`` have shape (samples, channels).  Spike positions
    appear twice (left then right limit).  ``runs`` lists inclusive index
    ranges sampled uniformly inside one smooth stretch; ``k2`` gives the
    constant local kinetic energy of each sample interval for scalar
    piecewise traces (NaN where V is not constant).  With log-rescaling the
    true solution is ``psi * exp(log_scale)``.
    """

    x: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    E: complex | float
    spec: object
    h: float
    runs: tuple
    k2: np.ndarray | None = None
    log_scale: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.psi.shape[1]

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.psi) or not np.any(self.psi.imag != 0)

    def channel(self, c: int = 0):
        return self.psi[:, c], self.dpsi[:, c]

    def true_psi(self) -> np.ndarray:
        if self.log_scale is None:
            return self.psi
        return self.psi * np.exp(self.log_scale)[:, None]

    def state_at(self, x: float, channel: int | None = None):
        """(psi, dpsi) at x: exact inside constant intervals, cubic Hermite elsewhere."""
        i = int(np.searchsorted(self.x, x, side="right") - 1)
        i = min(max(i, 0), len(self.x) - 2)
        while i + 1 < len(self.x) - 1 and self.x[i + 1] == self.x[i]:
            i += 1
        dx = x - self.x[i]
        if self.k2 is not None and np.isfinite(self.k2[i]):
            k2 = self.k2[i]
            k2 = k2.real if k2.imag == 0 else k2
            c, s = _cos_sinc(k2, dx)
            psi = c * self.psi[i] + s * self.dpsi[i]
            dpsi = -k2 * s * self.psi[i] + c * self.dpsi[i]
        else:
            psi, dpsi = _hermite(self.x[i], self.x[i + 1], self.psi[i], self.psi[i + 1],
                                 self.dpsi[i], self.dpsi[i + 1], x)
        if channel is None:
            return psi, dpsi
        return psi[channel], dpsi[channel]

    def to_csv(self, path_or_file):
        """Columns: x, then psi_1, dpsi_1, psi_2, dpsi_2, ...; complex traces
        split each into _re and _im columns."""
        rows = trace_rows(self)
        own = isinstance(path_or_file, str)
        f = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(rows[0])
            for r in rows[1:]:
                w.writerow([format(v, ".17g") for v in r])
        finally:
            if own:
                f.close()


def trace_columns(trace: WaveTrace) -> list[str]:
    cols = ["x"]
    cplx = not trace.is_real or (np.iscomplexobj(trace.dpsi) and np.any(trace.dpsi.imag != 0))
    for c in range(trace.n):
        for name in (f"psi_{c + 1}", f"dpsi_{c + 1}"):
            cols += [f"{name}_re", f"{name}_im"] if cplx else [name]
    return cols


def trace_rows(trace: WaveTrace):
    cols = trace_columns(trace)
    cplx = len(cols) > 1 + 2 * trace.n
    psi = trace.true_psi()
    dpsi = trace.dpsi if trace.log_scale is None else trace.dpsi * np.exp(trace.log_scale)[:, None]
    rows = [cols]
    for i in range(len(trace.x)):
        r = [float(trace.x[i])]
        for c in range(trace.n):
            for v in (psi[i, c], dpsi[i, c]):
                r += [float(np.real(v)), float(np.imag(v))] if cplx else [float(np.real(v))]
        rows.append(r)
    return rows


def _hermite(xa, xb, ya, yb, da, db, x):
    L = xb - xa
    if L == 0:
        return yb, db
    t = (x - xa) / L
    h00 = 2 * t**3 - 3 * t**2 + 1
    h10 = t**3 - 2 * t**2 + t
    h01 = -2 * t**3 + 3 * t**2
    h11 = t**3 - t**2
    y = h00 * ya + h10 * L * da + h01 * yb + h11 * L * db
    dh00 = (6 * t**2 - 6 * t) / L
    dh10 = 3 * t**2 - 4 * t + 1
    dh01 = (-6 * t**2 + 6 * t) / L
    dh11 = 3 * t**2 - 2 * t
    dy = dh00 * ya + dh10 * da + dh01 * yb + dh11 * db
    return y, dy


def _integrate(spec, E, x0, x1, init, h, rescale):
    med = _medium(spec)
    n = med.n
    if not x1 > x0:
        raise SpecError("integration needs x0 < x1")
    if not h > 0:
        raise SpecError("step h must be > 0")
    y = _as_state(init, n)
    cplx = med.complex or np.iscomplexobj(E) or np.iscomplexobj(y)
    y = y.astype(complex if cplx else float)
    Es = np.array([E])
    xs, ys, k2s, logs = [np.array([x0])], [y[None]], [], [np.zeros(1)]
    runs = []
    count = 1
    log_offset = 0.0
    last_x = x0

    for kind, xa, xb, data, _ in _oriented_pieces(med, x0, x1):
        if kind == "delta":
            y = _delta_transfer(n, data) @ y
            block_x, block_y = np.array([xb]), y[None]
            k2s.append(np.array([np.nan]))
        elif kind == "const":
            w = xb - xa
            m = max(1, math.ceil(w / h - 1e-9))
            off = w * np.arange(1, m + 1) / m
            V = data
            offd = V - np.diag(np.diag(V))
            if n == 1 or not np.any(offd != 0):
                k2 = E - med.eps - np.diag(V)
                c, s = _cos_sinc(k2[None, :], off[:, None])
                with np.errstate(over="ignore", invalid="ignore"):  # caught as overflow below
                    psi = c * y[None, :n] + s * y[None, n:]
                    dpsi = -k2[None, :] * s * y[None, :n] + c * y[None, n:]
                block_y = np.concatenate([psi, dpsi], axis=1)
                if not cplx:
                    block_y = block_y.real
            else:
                P = _const_transfer(med, V, Es, w / m)[0]
                block_y = np.empty((m, 2 * n), dtype=np.result_type(P, y))
                cur = y
                for i in range(m):
                    cur = P @ cur
                    block_y[i] = cur
            block_x = xa + off
            block_x[-1] = xb
            k2 = (E - med.eps[0] - V[0, 0]) if n == 1 else np.nan
            k2s.append(np.full(m, k2, dtype=complex))
            runs.append((count - 1, count - 1 + m))
        else:
            R, nodes = _rk4_steps(med, Es, xa, xb, h)
            R = R[0]
            m = R.shape[0]
            block_y = np.empty((m, 2 * n), dtype=np.result_type(R, y))
            cur = y
            for i in range(m):
                cur = R[i] @ cur
                block_y[i] = cur
            block_x = nodes[1:].copy()
            block_x[-1] = xb
            k2s.append(np.full(m, np.nan, dtype=complex))
            runs.append((count - 1, count - 1 + m))
        bad = ~np.all(np.isfinite(block_y), axis=1) | (np.abs(block_y[:, :n]).max(axis=1) > OVERFLOW)
        if np.any(bad):
            first = int(np.argmax(bad))
            raise AmplitudeOverflow(float(block_x[first - 1]) if first > 0 else last_x)
        y = block_y[-1]
        xs.append(block_x)
        ys.append(block_y)
        logs.append(np.full(len(block_x), log_offset))
        count += len(block_x)
        last_x = float(block_x[-1])
        if rescale:
            norm = np.abs(y).max()
            if norm > RESCALE_AT:
                y = y / norm
                log_offset += math.log(norm)
                # duplicate sample: same point, new scale
                xs.append(np.array([last_x]))
                ys.append(y[None])
                logs.append(np.array([log_offset]))
                k2s.append(np.array([np.nan]))
                count += 1

    x = np.concatenate(xs)
    Y = np.concatenate(ys)
    k2 = np.concatenate(k2s) if k2s else np.zeros(0, dtype=complex)
    return WaveTrace(
        x=x,
        psi=Y[:, :n],
        dpsi=Y[:, n:],
        E=E,
        spec=spec.spec if isinstance(spec, _Medium) else spec,
        h=h,
        runs=tuple(runs),
        k2=k2 if n == 1 else None,
        log_scale=np.concatenate(logs) if rescale else None,
    )


def integrate_scalar(p, E, x0: float, x1: float, init, h: float = DEFAULT_H, rescale: bool = False) -> WaveTrace:
    """Solve -psi'' = (E - V) psi on [x0, x1] from ``init`` = WaveState or (psi, dpsi).

    Piecewise and lattice potentials are stepped exactly, element by element,
    and sampled at spacing <= h; analytic forms use RK4 with step <= h.
    Raises AmplitudeOverflow when |psi| passes 1e200, unless ``rescale`` is
    set, in which case amplitudes are renormalised between pieces and the
    accumulated logarithm kept in ``trace.log_scale``.
    """
    if isinstance(p, ChannelSystemSpec):
        raise SpecError("integrate_scalar needs a scalar potential")
    return _integrate(p, E, x0, x1, init, h, rescale)


def integrate_channels(system: ChannelSystemSpec, E, x0: float, x1: float, init, h: float = DEFAULT_H,
                       rescale: bool = False) -> WaveTrace:
    """Coupled-channel analogue of :func:`integrate_scalar` with E_a = E - eps_a."""
    return _integrate(system, E, x0, x1, init, h, rescale)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def wronskian(t1: WaveTrace, t2: WaveTrace) -> np.ndarray:
    """sum_a (psi_a phi_a' - psi_a' phi_a) at every shared sample."""
    if t1.E != t2.E:
        raise SpecError("wronskian needs traces at the same energy")
    if t1.x.shape != t2.x.shape or not np.array_equal(t1.x, t2.x):
        raise SpecError("wronskian needs traces on the same grid")
    p1, d1 = t1.true_psi(), t1.dpsi if t1.log_scale is None else t1.dpsi * np.exp(t1.log_scale)[:, None]
    p2, d2 = t2.true_psi(), t2.dpsi if t2.log_scale is None else t2.dpsi * np.exp(t2.log_scale)[:, None]
    return np.sum(p1 * d2 - d1 * p2, axis=1)


def find_knots(trace: WaveTrace, channel: int = 0) -> np.ndarray:
    """Zeros of a real trace, refined inside each sample interval.

    Constant-potential intervals are refined on the exact in-element solution,
    others on the cubic Hermite interpolant.  Tangential zeros (psi and psi'
    both negligible) are dropped.
    """
    psi = trace.psi[:, channel]
    dpsi = trace.dpsi[:, channel]
    if np.iscomplexobj(psi):
        if np.any(psi.imag != 0):
            raise KnotsUndefined("knots undefined for a complex trace")
        psi, dpsi = psi.real, dpsi.real
    if trace.log_scale is not None:
        scale = np.exp(trace.log_scale - trace.log_scale.max())
        psi, dpsi = psi * scale, dpsi * scale
    amax = np.abs(psi).max()
    if amax == 0:
        return np.zeros(0)
    tol = KNOT_RTOL * amax
    dtol = KNOT_RTOL * max(np.abs(dpsi).max(), amax)
    small = np.abs(psi) <= tol
    knots = []
    for i in np.nonzero(small)[0]:
        if abs(dpsi[i]) > dtol:
            knots.append(trace.x[i])
    x = trace.x
    for i in range(len(x) - 1):
        if small[i] or small[i + 1] or x[i + 1] == x[i]:
            continue
        if np.sign(psi[i]) == np.sign(psi[i + 1]):
            continue
        k2 = trace.k2[i] if trace.k2 is not None else np.nan
        if np.isfinite(k2) and k2.imag == 0:
            kk = k2.real
            y0, d0, xa = psi[i], dpsi[i], x[i]

            def f(t):
                c, s = _cos_sinc(kk, t - xa)
                return float(c * y0 + s * d0)
        else:
            args = (x[i], x[i + 1], psi[i], psi[i + 1], dpsi[i], dpsi[i + 1])

            def f(t):
                return float(_hermite(*args, t)[0])
        fa, fb = f(x[i]), f(x[i + 1])
        if fa == 0:
            root = x[i]
        elif fb == 0:
            root = x[i + 1]
        elif np.sign(fa) == np.sign(fb):
            root = x[i] + (x[i + 1] - x[i]) * psi[i] / (psi[i] - psi[i + 1])
        else:
            root = brentq(f, x[i], x[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        knots.append(root)
    knots = np.sort(np.array(knots, dtype=float))
    if knots.size:
        keep = np.concatenate([[True], np.diff(knots) > 1e-12 * max(1.0, np.abs(knots).max())])
        knots = knots[keep]
    return knots


@dataclass(frozen=True)
class ResidualReport:
    """ODE residual of a trace and the bending classification per sample.

    ``bending`` holds TOWARD (+1: local kinetic energy > 0, the wave bends to
    the axis), FROM (-1) or NEUTRAL (0: E = V); for multichannel traces the
    classification is the measured sign of -psi'' psi per channel.
    ``mismatches`` counts samples whose measured curvature contradicts the
    rule for scalar real traces.
    """

    max_residual: float
    residual: np.ndarray
    bending: np.ndarray
    mismatches: int
    checked: int


def second_derivative(trace: WaveTrace) -> np.ndarray:
    """psi'' as the 5-point central difference of the stored psi'.

    NaN within two samples of the ends of each uniform run.
    """
    dpsi = trace.dpsi
    d2 = np.full(dpsi.shape, np.nan, dtype=np.result_type(dpsi, float))
    for i0, i1 in trace.runs:
        if i1 - i0 < 4:
            continue
        dx = (trace.x[i1] - trace.x[i0]) / (i1 - i0)
        sl = slice(i0 + 2, i1 - 1)
        d2[sl] = (dpsi[i0:i1 - 3] - 8 * dpsi[i0 + 1:i1 - 2] + 8 * dpsi[i0 + 3:i1] - dpsi[i0 + 4:i1 + 1]) / (12 * dx)
    return d2


def residual_check(trace: WaveTrace, spec=None, E=None) -> ResidualReport:
    """max |psi'' - (V - E_a) psi| over interior samples of uniform runs.

    psi'' is taken as the 5-point central difference of the stored psi',
    so samples within two steps of a spike or element edge are skipped.
    """
    spec = trace.spec if spec is None else spec
    E = trace.E if E is None else E
    med = _medium(spec)
    n = med.n
    N = len(trace.x)
    psi = trace.psi
    dpsi = trace.dpsi
    res = np.full((N, n), np.nan)
    d2 = second_derivative(trace)
    ok = np.all(np.isfinite(d2), axis=1) if N else np.zeros(0, bool)
    idx = np.nonzero(ok)[0]
    V = med.matrix(trace.x[idx]) if idx.size else np.zeros((0, n, n))
    kin = E - med.eps
    if idx.size:
        force = np.einsum("iab,ib->ia", V, psi[idx]) - kin[None, :] * psi[idx]
        r = np.abs(d2[idx] - force)
        if trace.log_scale is not None:
            r = r * np.exp(trace.log_scale[idx])[:, None]
        res[idx] = r
    max_res = float(np.nanmax(res)) if idx.size else 0.0

    Vall = med.matrix(trace.x)
    mismatches = 0
    checked = 0
    if n == 1:
        local = np.real(kin[0] - Vall[:, 0, 0])
        bending = np.sign(local).astype(int)[:, None]
        if trace.is_real and idx.size:
            p = np.real(psi[idx, 0])
            curv = np.real(d2[idx, 0])
            amp = np.abs(p).max()
            strong = (np.abs(p) > 1e-6 * amp) & (np.abs(local[idx]) > 1e-9) & (np.abs(curv) > 1e3 * res[idx, 0])
            checked = int(strong.sum())
            mismatches = int(np.sum(np.sign(-curv[strong] * p[strong]) != np.sign(local[idx][strong])))
    else:
        bending = np.zeros((N, n), dtype=int)
        if idx.size:
            bending[idx] = np.sign(np.real(-d2[idx] * np.conj(psi[idx]))).astype(int)
    return ResidualReport(max_res, res, bending, mismatches, checked)
