"""
Potential and channel-system specifications.

Units are hbar^2/2m = 1, so the scalar equation reads

    -psi''(x) = (E - V(x)) psi(x)

and the coupled one

    -psi_a''(x) = (E - eps_a - V_aa(x)) psi_a(x) - sum_{b != a} V_ab(x) psi_b(x).

A potential is one of

* ``Piecewise`` - constant segments and zero-width delta spikes laid out
  from ``start``; the potential is zero outside the support.
* ``Lattice``   - the same elements repeated with period ``period``; the
  cell begins at x = 0.
* ``Analytic``  - one of the named smooth forms ``zero``, ``sech2``,
  ``cosine`` and ``cexp``.

Delta spikes are never smeared out: ``evaluate`` returns only the smooth
part and the spikes enter the integrators as derivative jumps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import SpecError

Number = Union[float, complex]

ANALYTIC_FORMS = {
    "zero": {"required": (), "optional": {}},
    "sech2": {"required": ("depth", "scale"), "optional": {"center": 0.0}},
    "cosine": {"required": ("amplitude", "wavenumber"), "optional": {"phase": 0.0}},
    "cexp": {"required": ("amplitude", "wavenumber"), "optional": {}},
}

# Relative tolerance for "period equals the sum of widths" and symmetry checks.
_REL_TOL = 1e-12


@dataclass(frozen=True)
class ConstSegment:
    width: float
    height: Number = 0.0


@dataclass(frozen=True)
class DeltaSpike:
    strength: Number


Element = Union[ConstSegment, DeltaSpike]


@dataclass(frozen=True)
class Piecewise:
    elements: tuple
    start: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    @property
    def width(self) -> float:
        return sum(e.width for e in self.elements if isinstance(e, ConstSegment))

    @property
    def support(self) -> tuple[float, float]:
        return self.start, self.start + self.width


@dataclass(frozen=True)
class Lattice:
    cell: tuple
    period: float

    def __post_init__(self):
        object.__setattr__(self, "cell", tuple(self.cell))


@dataclass(frozen=True)
class Analytic:
    form: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        spec = ANALYTIC_FORMS.get(self.form)
        if spec is None:
            return
        merged = dict(spec["optional"])
        merged.update(self.params)
        object.__setattr__(self, "params", merged)

    def __hash__(self):
        return hash((self.form, tuple(sorted(self.params.items()))))


PotentialSpec = Union[Piecewise, Lattice, Analytic]

ZERO = Analytic("zero")


@dataclass(frozen=True)
class PointCoupling:
    position: float
    strengths: tuple  # n x n nested tuple

    def __post_init__(self):
        object.__setattr__(
            self, "strengths", tuple(tuple(row) for row in np.asarray(self.strengths).tolist())
        )

    def matrix(self) -> np.ndarray:
        return np.array(self.strengths)


@dataclass(frozen=True)
class ChannelSystemSpec:
    """Coupled channels with thresholds and an interaction matrix of potentials.

    ``symmetric=False`` is reserved for the real/imaginary split of complex
    potentials, whose coupling is antisymmetric.
    """

    thresholds: tuple
    matrix: tuple
    point_couplings: tuple = ()
    symmetric: bool = True

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(self.thresholds))
        object.__setattr__(self, "matrix", tuple(tuple(row) for row in self.matrix))
        object.__setattr__(self, "point_couplings", tuple(self.point_couplings))

    @property
    def n(self) -> int:
        return len(self.thresholds)


def as_system(spec) -> ChannelSystemSpec:
    """View a scalar potential as a one-channel system (threshold 0)."""
    if isinstance(spec, ChannelSystemSpec):
        return spec
    return ChannelSystemSpec(thresholds=(0.0,), matrix=((spec,),))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _finite(v) -> bool:
    return bool(np.isfinite(complex(v).real) and np.isfinite(complex(v).imag))


def _validate_elements(elements, where) -> list[str]:
    errors = []
    if len(elements) == 0:
        errors.append(f"{where}: empty element list")
    for i, e in enumerate(elements):
        if isinstance(e, ConstSegment):
            if not (np.isfinite(e.width) and e.width > 0):
                errors.append(f"{where}[{i}]: segment width must be > 0")
            if not _finite(e.height):
                errors.append(f"{where}[{i}]: non-finite height")
        elif isinstance(e, DeltaSpike):
            if not _finite(e.strength):
                errors.append(f"{where}[{i}]: non-finite delta strength")
        else:
            errors.append(f"{where}[{i}]: unknown element {type(e).__name__}")
    return errors


def _validate_potential(p, where="potential") -> list[str]:
    if isinstance(p, Piecewise):
        errors = _validate_elements(p.elements, f"{where}.elements")
        if not np.isfinite(p.start):
            errors.append(f"{where}: non-finite support start")
        return errors
    if isinstance(p, Lattice):
        errors = _validate_elements(p.cell, f"{where}.cell")
        if not (np.isfinite(p.period) and p.period > 0):
            errors.append(f"{where}: period must be > 0")
        elif not errors:
            total = sum(e.width for e in p.cell if isinstance(e, ConstSegment))
            if abs(total - p.period) > _REL_TOL * max(1.0, p.period):
                errors.append(
                    f"{where}: period mismatch (period {p.period!r} != sum of widths {total!r})"
                )
        return errors
    if isinstance(p, Analytic):
        form = ANALYTIC_FORMS.get(p.form)
        if form is None:
            return [f"{where}: unknown analytic form {p.form!r}"]
        errors = []
        allowed = set(form["required"]) | set(form["optional"])
        for key in form["required"]:
            if key not in p.params:
                errors.append(f"{where}: {p.form} needs parameter {key!r}")
        for key, val in p.params.items():
            if key not in allowed:
                errors.append(f"{where}: {p.form} has no parameter {key!r}")
            elif not _finite(val):
                errors.append(f"{where}: parameter {key!r} is not finite")
        if errors:
            return errors
        if p.form == "sech2" and not complex(p.params["scale"]).real > 0:
            errors.append(f"{where}: sech2 scale must be > 0")
        if p.form in ("cosine", "cexp") and p.params["wavenumber"] == 0:
            errors.append(f"{where}: {p.form} wavenumber must be nonzero")
        for key in ("scale", "center", "wavenumber", "phase"):
            if key in p.params and isinstance(p.params[key], complex):
                errors.append(f"{where}: parameter {key!r} must be real")
        return errors
    return [f"{where}: not a potential spec ({type(p).__name__})"]


def _spec_equal(a, b) -> bool:
    return a == b


def _validate_system(s: ChannelSystemSpec) -> list[str]:
    errors = []
    n = s.n
    if n < 1:
        return ["system: channel count must be >= 1"]
    th = list(s.thresholds)
    if any(not np.isfinite(t) for t in th):
        errors.append("system: non-finite threshold")
    elif any(b < a for a, b in zip(th, th[1:])):
        errors.append("system: thresholds must be nondecreasing")
    if len(s.matrix) != n or any(len(row) != n for row in s.matrix):
        errors.append(f"system: matrix must be {n}x{n}")
        return errors
    for a in range(n):
        for b in range(n):
            errors += _validate_potential(s.matrix[a][b], f"V{a + 1}{b + 1}")
    if s.symmetric:
        for a in range(n):
            for b in range(a + 1, n):
                if not _spec_equal(s.matrix[a][b], s.matrix[b][a]):
                    errors.append(f"V{a + 1}{b + 1} ≠ V{b + 1}{a + 1}")
    for i, pc in enumerate(s.point_couplings):
        g = np.asarray(pc.strengths)
        if g.shape != (n, n):
            errors.append(f"point_couplings[{i}]: strengths must be {n}x{n}")
            continue
        if not np.all(np.isfinite(g)) or not np.isfinite(pc.position):
            errors.append(f"point_couplings[{i}]: non-finite entries")
        if s.symmetric and not np.allclose(g, g.T, rtol=0, atol=_REL_TOL * max(1.0, np.abs(g).max())):
            errors.append(f"point_couplings[{i}]: strengths not symmetric (g12 ≠ g21)")
    return errors


def validate(spec) -> list[str]:
    """Return the list of violated invariants; empty means the spec is valid."""
    if isinstance(spec, ChannelSystemSpec):
        return _validate_system(spec)
    return _validate_potential(spec)


def check(spec):
    """Validate and return ``spec``, raising :class:`SpecError` on failure."""
    errors = validate(spec)
    if errors:
        raise SpecError(errors)
    return spec


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _layout(elements, origin=0.0):
    """Segment edges, heights and spike positions of an element list."""
    edges = [origin]
    heights = []
    spikes = []
    for e in elements:
        if isinstance(e, ConstSegment):
            heights.append(e.height)
            edges.append(edges[-1] + e.width)
        else:
            spikes.append((edges[-1], e.strength))
    return np.array(edges), np.array(heights), spikes


def _eval_elements(elements, x, origin=0.0):
    edges, heights, _ = _layout(elements, origin)
    dtype = np.result_type(heights, float)
    out = np.zeros(x.shape, dtype=dtype)
    inside = (x >= edges[0]) & (x < edges[-1])
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(heights) - 1)
    out[inside] = heights[idx[inside]]
    return out


def evaluate(p: PotentialSpec, x):
    """Smooth part of V at ``x`` (scalar or array); spikes are not returned."""
    xa = np.asarray(x, dtype=float)
    if isinstance(p, Piecewise):
        out = _eval_elements(p.elements, xa, p.start)
    elif isinstance(p, Lattice):
        out = _eval_elements(p.cell, np.mod(xa, p.period))
    elif isinstance(p, Analytic):
        q = p.params
        if p.form == "zero":
            out = np.zeros(xa.shape)
        elif p.form == "sech2":
            out = q["depth"] / np.cosh(q["scale"] * (xa - q["center"])) ** 2
        elif p.form == "cosine":
            out = q["amplitude"] * np.cos(q["wavenumber"] * xa + q["phase"])
        elif p.form == "cexp":
            out = q["amplitude"] * np.exp(1j * q["wavenumber"] * xa)
        else:
            raise SpecError(f"unknown analytic form {p.form!r}")
    else:
        raise SpecError(f"not a potential spec ({type(p).__name__})")
    if np.ndim(x) == 0:
        return out[()]
    return out


def is_smooth(p) -> bool:
    """True when V must be integrated numerically (not piecewise constant)."""
    return isinstance(p, Analytic) and p.form != "zero"


def is_complex(p) -> bool:
    if isinstance(p, (Piecewise, Lattice)):
        els = p.elements if isinstance(p, Piecewise) else p.cell
        return any(
            complex(getattr(e, "height", 0.0)).imag != 0 or complex(getattr(e, "strength", 0.0)).imag != 0
            for e in els
        )
    if isinstance(p, Analytic):
        if p.form == "cexp":
            return True
        return any(isinstance(v, complex) and v.imag != 0 for v in p.params.values())
    if isinstance(p, ChannelSystemSpec):
        return any(is_complex(e) for row in p.matrix for e in row) or any(
            np.iscomplexobj(pc.matrix()) and np.any(pc.matrix().imag != 0) for pc in p.point_couplings
        )
    return False


def period_of(p) -> float | None:
    """Spatial period of a periodic spec, or None."""
    if isinstance(p, Lattice):
        return p.period
    if isinstance(p, Analytic) and p.form in ("cosine", "cexp"):
        return 2.0 * math.pi / abs(p.params["wavenumber"])
    return None


def spikes_between(p, lo: float, hi: float, tol: float = 0.0):
    """Delta spikes with lo < position <= hi as (position, strength) pairs."""
    if isinstance(p, Piecewise):
        _, _, spikes = _layout(p.elements, p.start)
        return [(x, g) for x, g in spikes if lo + tol < x <= hi + tol]
    if isinstance(p, Lattice):
        _, _, spikes = _layout(p.cell)
        out = []
        a = p.period
        for j in range(math.floor(lo / a) - 1, math.ceil(hi / a) + 2):
            for x, g in spikes:
                xx = j * a + x
                if lo + tol < xx <= hi + tol:
                    out.append((xx, g))
        return sorted(out, key=lambda t: t[0])
    return []


def breakpoints_between(p, lo: float, hi: float):
    """Positions in [lo, hi] where the smooth part of V may jump."""
    if isinstance(p, Piecewise):
        edges, _, _ = _layout(p.elements, p.start)
        return [x for x in edges if lo <= x <= hi]
    if isinstance(p, Lattice):
        edges, _, _ = _layout(p.cell)
        a = p.period
        out = []
        for j in range(math.floor(lo / a) - 1, math.ceil(hi / a) + 2):
            out.extend(j * a + e for e in edges)
        return [x for x in out if lo <= x <= hi]
    return []


def scaled(p, factor):
    """The same potential multiplied by ``factor`` (spikes included)."""
    if factor == 1:
        return p

    def scale_elements(els):
        out = []
        for e in els:
            if isinstance(e, ConstSegment):
                out.append(ConstSegment(e.width, e.height * factor))
            else:
                out.append(DeltaSpike(e.strength * factor))
        return tuple(out)

    if isinstance(p, Piecewise):
        return Piecewise(scale_elements(p.elements), p.start)
    if isinstance(p, Lattice):
        return Lattice(scale_elements(p.cell), p.period)
    if isinstance(p, Analytic):
        if p.form == "zero" or factor == 0:
            return ZERO
        q = dict(p.params)
        key = "depth" if p.form == "sech2" else "amplitude"
        q[key] = q[key] * factor
        return Analytic(p.form, q)
    raise SpecError(f"not a potential spec ({type(p).__name__})")


# ---------------------------------------------------------------------------
# builtins
# ---------------------------------------------------------------------------

def builtin_dirac_comb(g: Number, a: float) -> Lattice:
    """Spikes of strength ``g`` at x = a*k (one per period, at the cell's end)."""
    if not a > 0:
        raise SpecError("period must be > 0")
    return check(Lattice((ConstSegment(a, 0.0), DeltaSpike(g)), a))


def builtin_free_lattice(a: float) -> Lattice:
    if not a > 0:
        raise SpecError("period must be > 0")
    return check(Lattice((ConstSegment(a, 0.0),), a))


def builtin_kronig_penney(height: Number, barrier: float, well: float) -> Lattice:
    """Barrier of width ``barrier`` followed by a zero-potential well."""
    return check(Lattice((ConstSegment(barrier, height), ConstSegment(well, 0.0)), barrier + well))


def builtin_soliton(kappa: float, center: float = 0.0) -> Analytic:
    """Reflectionless well -2 kappa^2 sech^2(kappa (x - center))."""
    if not kappa > 0:
        raise SpecError("kappa must be > 0")
    return check(Analytic("sech2", {"depth": -2.0 * kappa**2, "scale": kappa, "center": center}))


def builtin_transparent_pair(variant: str, kappa: float, center: float = 0.0) -> ChannelSystemSpec:
    """Two equal-threshold channels whose entries are half a soliton up to sign.

    Variant ``a`` has all four entries equal; in the basis (psi1 +- psi2)/sqrt(2)
    it splits into the full soliton and free motion.  Variant ``b`` flips the
    sign of the off-diagonal entries, which swaps the two rotated channels.
    """
    if variant not in ("a", "b"):
        raise SpecError(f"unknown transparent-pair variant {variant!r}")
    half = scaled(builtin_soliton(kappa, center), 0.5)
    off = half if variant == "a" else scaled(half, -1.0)
    return check(ChannelSystemSpec((0.0, 0.0), ((half, off), (off, half))))
