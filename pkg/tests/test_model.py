import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavebend import model
from wavebend.errors import SpecError
from wavebend.model import (Analytic, ChannelSystemSpec, ConstSegment, DeltaSpike, Lattice, Piecewise,
                            PointCoupling, ZERO)


def test_lattice_period_mismatch_is_named():
    lat = Lattice((ConstSegment(1.0, 0.0), ConstSegment(1.0, 2.0)), 2.5)
    errors = model.validate(lat)
    assert any("period mismatch" in e for e in errors)
    with pytest.raises(SpecError):
        model.check(lat)


def test_bad_elements_collect_all_errors():
    p = Piecewise((ConstSegment(-1.0, 0.0), DeltaSpike(float("nan"))))
    errors = model.validate(p)
    assert len(errors) == 2


def test_analytic_forms_checked():
    assert model.validate(Analytic("sech2", {"depth": -1.0, "scale": 1.0})) == []
    assert model.validate(Analytic("sech2", {"depth": -1.0}))
    assert model.validate(Analytic("sech2", {"depth": -1.0, "scale": -2.0}))
    assert model.validate(Analytic("bessel", {}))
    assert model.validate(Analytic("cosine", {"amplitude": 1.0, "wavenumber": 2.0, "bogus": 1.0}))


def test_system_symmetry_and_thresholds():
    s = model.builtin_soliton(1.0)
    ok = ChannelSystemSpec((0.0, 1.0), ((s, ZERO), (ZERO, s)))
    assert model.validate(ok) == []
    asym = ChannelSystemSpec((0.0, 1.0), ((s, s), (ZERO, s)))
    assert any("V12" in e for e in model.validate(asym))
    assert model.validate(ChannelSystemSpec((1.0, 0.0), ((s, ZERO), (ZERO, s))))
    pc = PointCoupling(0.0, ((0.0, 1.0), (2.0, 0.0)))
    bad = ChannelSystemSpec((0.0, 1.0), ((ZERO, ZERO), (ZERO, ZERO)), (pc,))
    assert any("symmetric" in e for e in model.validate(bad))


def test_evaluate_piecewise_and_lattice():
    p = Piecewise((ConstSegment(1.0, 3.0), DeltaSpike(5.0), ConstSegment(2.0, -1.0)), start=-1.0)
    v = model.evaluate(p, np.array([-2.0, -0.5, 0.5, 1.5, 2.5]))
    assert v.tolist() == [0.0, 3.0, -1.0, -1.0, 0.0]
    lat = model.builtin_kronig_penney(2.0, 0.5, 1.5)
    assert model.evaluate(lat, 0.25) == 2.0
    assert model.evaluate(lat, 0.25 + 7 * 2.0) == 2.0
    assert model.evaluate(lat, 1.0 - 4 * 2.0) == 0.0
    assert model.spikes_between(p, -5, 5) == [(0.0, 5.0)]


def test_evaluate_analytic():
    s = model.builtin_soliton(2.0, 1.0)
    assert model.evaluate(s, 1.0) == pytest.approx(-8.0)
    c = Analytic("cosine", {"amplitude": 2.0, "wavenumber": 2.0, "phase": -math.pi / 2})
    assert model.evaluate(c, math.pi / 4) == pytest.approx(2.0)
    e = Analytic("cexp", {"amplitude": 1.0, "wavenumber": 2.0})
    assert model.evaluate(e, math.pi / 4) == pytest.approx(1j)
    assert model.is_complex(e) and not model.is_complex(c)
    assert model.period_of(c) == pytest.approx(math.pi)


def test_builtins():
    comb = model.builtin_dirac_comb(2.0, math.pi)
    assert model.spikes_between(comb, 0.0, 2 * math.pi) == [(math.pi, 2.0), (2 * math.pi, 2.0)]
    free = model.builtin_free_lattice(1.0)
    assert model.evaluate(free, 0.3) == 0.0
    pair = model.builtin_transparent_pair("b", 1.0)
    assert model.evaluate(pair.matrix[0][1], 0.0) == pytest.approx(1.0)
    assert model.evaluate(pair.matrix[0][0], 0.0) == pytest.approx(-1.0)
    with pytest.raises(SpecError):
        model.builtin_transparent_pair("c", 1.0)
    with pytest.raises(SpecError):
        model.builtin_soliton(-1.0)


def test_scaled_by_zero_is_zero():
    s = model.builtin_soliton(1.0)
    assert model.scaled(s, 0.0) == ZERO
    assert model.evaluate(model.scaled(s, -0.5), 0.0) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0.05, 3.0), st.floats(-5, 5)), min_size=1, max_size=5),
       st.floats(-10, 10))
def test_lattice_is_periodic(segs, x):
    cell = tuple(ConstSegment(w, v) for w, v in segs)
    a = sum(w for w, _ in segs)
    lat = model.check(Lattice(cell, a))
    # away from element edges the value repeats
    edges = np.cumsum([0.0] + [w for w, _ in segs])
    u = x % a
    if np.min(np.abs(edges - u)) > 1e-6:
        assert model.evaluate(lat, x) == model.evaluate(lat, x + 3 * a)
