import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from wavebend import bsec
from wavebend.errors import NumericalError, SpecError


def test_reference_construction():
    sol = bsec.construct(None, 2.0)
    assert sol.E == pytest.approx(1.0) and sol.kappa == pytest.approx(1.0)
    g = 1.0 / (1.0 + math.exp(-math.pi))
    assert sol.g0 == pytest.approx(g, rel=1e-15)
    assert sol.gL == pytest.approx(g, rel=1e-15)
    assert sol.h0 == pytest.approx(-2 * g, rel=1e-15)
    assert sol.hL == pytest.approx(-2 * g, rel=1e-15)


def test_reference_verifies():
    rep = bsec.verify(bsec.construct(None, 2.0))
    assert rep.passed, rep.summary()
    assert rep.ode_residual < 1e-9 and rep.jump_residual < 1e-12
    assert rep.leakage < 1e-8 and rep.tail_error < 1e-3


def test_even_mode_flips_far_coupling():
    L = 2.0
    E = (2 * math.pi / L) ** 2
    sol = bsec.construct(None, E + 1.0, L=L, n=2)
    assert sol.gL < 0 < sol.g0
    assert bsec.verify(sol).passed


def test_norm_matches_quadrature():
    sol = bsec.construct(None, 2.5, L=2.0, n=1, A0=0.7, AL=-1.3)
    f = lambda x: float(sol.psi(x)[1]) ** 2  # noqa: E731
    ref = sum(quad(f, a, b, epsabs=1e-14, epsrel=1e-13)[0]
              for a, b in ((-np.inf, 0.0), (0.0, sol.L), (sol.L, np.inf)))
    assert bsec.verify(sol).norm2 == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("name", bsec.STRENGTHS)
def test_detuning_leaks(name):
    sol = bsec.construct(None, 2.0)
    rep = bsec.verify(sol.detuned(name, 1.01))
    assert rep.leakage > 1e-4
    assert not rep.passed
    with pytest.raises(NumericalError):
        bsec.verify(sol.detuned(name, 1.01), strict=True)


def test_construction_errors():
    with pytest.raises(SpecError, match="support mismatch"):
        bsec.construct(1.2, 3.0, L=math.pi)
    with pytest.raises(SpecError, match="not closed"):
        bsec.construct(None, 0.5)
    with pytest.raises(SpecError, match="vanishes"):
        bsec.construct(None, 2.0, A0=1.0, AL=-math.exp(math.pi))
    with pytest.raises(SpecError):
        bsec.construct(None, 2.0, n=0)
    with pytest.raises(SpecError):
        bsec.construct(None, 2.0).detuned("q", 1.1)


def test_closed_form_shape():
    sol = bsec.construct(None, 2.0)
    x = np.array([-1.0, 0.5, 2.0, 4.0])
    p1, p2 = sol.psi(x)
    assert p1[0] == 0 and p1[3] == 0
    assert p1[1] == pytest.approx(math.sin(0.5))
    assert p2[0] == pytest.approx(math.exp(-1.0) + math.exp(-(1.0 + math.pi)))


@settings(max_examples=10, deadline=None)
@given(st.floats(1.0, 4.0), st.integers(1, 3), st.floats(0.5, 3.0), st.floats(0.3, 2.0), st.floats(-2.0, 2.0))
def test_random_parameters_verify(L, n, kappa, A0, AL):
    if abs(AL) < 0.2:
        AL = 0.2
    E = (n * math.pi / L) ** 2
    sol = bsec.construct(None, E + kappa ** 2, L=L, n=n, A0=A0, AL=AL)
    assert bsec.verify(sol).passed
