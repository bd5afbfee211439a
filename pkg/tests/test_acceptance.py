"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The verdicts are also listed in pytest's terminal summary.
"""

import io
import math
import os

import numpy as np
from scipy.optimize import brentq

import oracles
from wavebend import bands, bsec, channels, cli, cxperiodic as cx, model
from wavebend.model import Analytic, ChannelSystemSpec, ConstSegment, DeltaSpike, Lattice, Piecewise
from wavebend.propagate import integrate_channels, integrate_scalar, transfer_matrix, wronskian

A = math.pi
COMB = model.builtin_dirac_comb(2.0, A)
COSINE = Analytic("cosine", {"amplitude": 2.0, "wavenumber": 2.0})
SINE = Analytic("cosine", {"amplitude": 2.0, "wavenumber": 2.0, "phase": -math.pi / 2})
KP = model.builtin_kronig_penney(3.0, 0.6, 1.4)
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _first_gap():
    return bands.zone_edges(COMB, 0.1, 3.0).gap(0)


def _free_solution(E, V, x, p, d):
    k2 = E - V
    if k2 > 0:
        k = math.sqrt(k2)
        return p * np.cos(k * x) + d * np.sin(k * x) / k, -p * k * np.sin(k * x) + d * np.cos(k * x)
    if k2 < 0:
        q = math.sqrt(-k2)
        return p * np.cosh(q * x) + d * np.sinh(q * x) / q, p * q * np.sinh(q * x) + d * np.cosh(q * x)
    return p + d * x, d + 0 * x


def test_01_exactness(record):
    E = 2.0
    elements = [(0.7, 0.5), (1.1, 2.0), (0.4, 3.5), (0.9, -1.0)]
    spikes = [0.8, -1.3, 0.0, 2.1]
    els = []
    for (w, v), g in zip(elements, spikes):
        els += [ConstSegment(w, v), DeltaSpike(g)]
    p = Piecewise(tuple(els))
    tr = integrate_scalar(p, E, 0.0, sum(w for w, _ in elements), (0.4, -0.9), h=0.01)
    worst = 0.0
    x0, (ps, ds) = 0.0, (0.4, -0.9)
    for (w, v), g in zip(elements, spikes):
        # strict interior, so neither side of a jump is compared against the wrong limit
        sel = (tr.x > x0 + 1e-12) & (tr.x < x0 + w - 1e-12)
        ref, dref = _free_solution(E, v, tr.x[sel] - x0, ps, ds)
        worst = max(worst, np.abs(tr.psi[sel, 0] - ref).max(), np.abs(tr.dpsi[sel, 0] - dref).max())
        ps, ds = _free_solution(E, v, w, ps, ds)
        ds = ds + g * ps
        x0 += w
    worst = max(worst, abs(tr.psi[-1, 0] - ps), abs(tr.dpsi[-1, 0] - ds))

    k, kappa = 1.3, 1.0
    re, dre, _, _ = oracles.soliton_solution(np.array([-4.0, 4.0]), k, kappa)

    def err(h):
        t = integrate_scalar(model.builtin_soliton(kappa), k * k, -4.0, 4.0, (re[0], dre[0]), h)
        return abs(t.psi[-1, 0] - re[1])

    e = [err(h) for h in (0.04, 0.02, 0.01)]
    ratios = [e[0] / e[1], e[1] / e[2]]
    record(1, "exactness", {"piecewise closed form 1e-12": worst < 1e-12, "rk4 ratio >= 12": min(ratios) >= 12},
           f"piecewise err {worst:.1e}, rk4 ratios {ratios[0]:.2f} {ratios[1]:.2f}")


def test_02_conservation(record):
    worst_w = 0.0
    for lat, E in ((COMB, 0.6), (COMB, 2.5), (KP, 1.0), (COSINE, 2.0)):
        a = model.period_of(lat)
        t1 = integrate_scalar(lat, E, 0.0, 100 * a, (1.0, 0.0))
        t2 = integrate_scalar(lat, E, 0.0, 100 * a, (0.0, 1.0))
        worst_w = max(worst_w, np.abs(wronskian(t1, t2) - 1).max())
    worst_d = 0.0
    for lat, hi in ((COMB, 25.0), (KP, 25.0), (COSINE, 9.0)):
        Es = np.linspace(0.1, hi, 400)
        M = transfer_matrix(lat, Es, 0.0, model.period_of(lat))
        worst_d = max(worst_d, np.abs(np.linalg.det(M) - 1).max())
    fam = cx.ComplexLattice(COSINE, SINE)
    for t in (0.5, 1.0):
        s = cx.complex_spectrum(fam.with_t(t), np.linspace(0.1, 9.0, 200))
        worst_d = max(worst_d, np.abs(s.det - 1).max())
    record(2, "conservation", {"wronskian 1e-10": worst_w < 1e-10, "det M 1e-10": worst_d < 1e-10},
           f"wronskian {worst_w:.1e}, det {worst_d:.1e}")


def _random_cell(rng):
    n = int(rng.integers(1, 4))
    segs = []
    for _ in range(n):
        segs.append(("const", float(rng.uniform(0.2, 1.2)), float(rng.uniform(-3, 5))))
        if rng.random() < 0.5:
            segs.append(("delta", float(rng.uniform(-2, 3))))
    return segs


def test_03_oracle_equivalence(record):
    rng = np.random.default_rng(20261018)
    worst = 0.0
    for i in range(50):
        E = float(rng.uniform(0.1, 12.0))
        if i < 35:
            segs = _random_cell(rng)
            els = tuple(ConstSegment(s[1], s[2]) if s[0] == "const" else DeltaSpike(s[1]) for s in segs)
            lat = model.check(Lattice(els, sum(s[1] for s in segs if s[0] == "const")))
            ref = oracles.rk4_cell_monodromy(segs, E)
        else:
            amp, wn = float(rng.uniform(0.5, 3.0)), float(rng.choice([1.0, 2.0, 3.0]))
            lat = Analytic("cosine", {"amplitude": amp, "wavenumber": wn})
            a = 2 * math.pi / wn
            ref = oracles.rk4_fundamental(lambda x: amp * math.cos(wn * x), E, 0.0, a, 3000)
        D = float(bands.discriminant(lat, [E])[0])
        Dref = 0.5 * np.trace(ref)
        worst = max(worst, abs(D - Dref) / max(1.0, abs(Dref)))
    rep = bands.zone_edges(COMB, 0.1, 25.0)
    found = sorted({z.lower for z in rep.zones if z.lower_is_edge} | {z.upper for z in rep.zones if z.upper_is_edge})
    exact = oracles.comb_edges(2.0, A, 0.1, 25.0)
    edge_err = float(np.abs(np.array(found) - exact).max()) if len(found) == len(exact) else math.inf
    record(3, "oracle equivalence", {"D vs rk4 1e-6": worst < 1e-6, "comb edges 1e-8": edge_err < 1e-8},
           f"D rel err {worst:.1e}, edge err {edge_err:.1e}")


def test_04_free_motion(record):
    rep = bands.zone_edges(model.builtin_free_lattice(A), 0.1, 25.0)
    widest = max((z.width for z in rep.gaps), default=0.0)
    record(4, "free-motion null test", {"gap widths < 1e-9": widest < 1e-9},
           f"{len(rep.gaps)} touching points, widest {widest:.1e}")


def test_05_permanent_resonance(record):
    gap = _first_gap()
    rep = bands.permanent_resonance_report(COMB, gap, m=11, n_periods=10)
    worst = 0.0
    for row in rep.rows:
        bumps = oracles.comb_growing_bumps(row["E"], 2.0, A, 10)
        ref = float(np.mean([b[2] for b in bumps]))
        worst = max(worst, abs(row["avg_kinetic_mean"] - ref) / abs(ref))
    c = rep.claims
    record(5, "permanent resonance", {
        "knots invariant 1e-5 a": c["knots_translation_invariant"],
        "growth = lambda 1e-5": c["growth_equals_multiplier"],
        "lambda -> 1 at edges 1e-4": c["lambda_to_one_at_edges"],
        "bump identity 1e-7": c["bump_identity"],
        "dense quadrature 1e-6": worst < 1e-6,
    }, f"quadrature rel err {worst:.1e}, bump average spread across gap {c['avg_kinetic_across_gap_spread']:.4f}")


def test_06_beating(record):
    energies = (0.6, 0.8, 2.5, 3.5, 6.0)
    mod_err = rel = 0.0
    bounded = True
    for E in energies:
        b = bands.beating_envelope(COMB, E, n_periods=100)
        mod_err = max(mod_err, abs(b.multiplier_abs[0] - 1), abs(b.multiplier_abs[1] - 1))
        rel = max(rel, b.relative_error)
        # Floquet basis bound in the (psi, psi'/k) norm
        _, P = np.linalg.eig(bands.monodromy(COMB, E).matrix)
        SP = np.diag([1.0, 1.0 / math.sqrt(E)]) @ P
        bounded &= bool(b.envelope.max() <= np.linalg.cond(SP) * b.envelope[0] * (1 + 1e-9))
    record(6, "allowed-zone beating", {"|lambda| = 1 to 1e-8": mod_err < 1e-8, "envelope bounded": bounded,
                                       "beat period 5%": rel < 0.05},
           f"|lambda| err {mod_err:.1e}, worst beat period err {rel:.1e}")


def test_07_tamm(record):
    gap = _first_gap()
    res = bands.tamm_search(COMB, gap)
    ref = brentq(lambda E: oracles.comb_tamm_condition(E, 2.0, A), gap.lower + 1e-9, gap.upper - 1e-9, xtol=1e-15)
    ok_root = res.count == 1 and abs(res.roots[0] - ref) < 1e-10
    chk = bands.verify_tamm(COMB, res.roots[0], n_periods=20) if res.count else None
    record(7, "Tamm state", {"one root": res.count == 1, "root = closed form": ok_root,
                             "decays over 20 periods": bool(chk and chk.decays and chk.bounded)},
           f"E_T = {res.roots[0]:.13f}, |lambda_-| = {chk.lam_minus:.6f}" if chk else "")


def test_08_scattering(record):
    scalar = [Piecewise((DeltaSpike(2.0),)), Piecewise((ConstSegment(1.2, 2.0),), start=-0.6),
              Piecewise((ConstSegment(0.5, 4.0), ConstSegment(1.0, 0.0), ConstSegment(0.5, 4.0)), start=-1.0),
              model.builtin_soliton(1.0), Analytic("sech2", {"depth": 1.5, "scale": 0.7})]
    worst_s = max(channels.scattering_scalar(p, E).unitarity_defect for p in scalar for E in (0.3, 1.0, 2.5, 6.0))
    sech = lambda d, s=1.0: Analytic("sech2", {"depth": d, "scale": s})  # noqa: E731
    system = ChannelSystemSpec((0.0, 0.5), ((sech(-1.0), sech(0.4)), (sech(0.4), sech(0.5, 1.5))))
    worst_m = max(channels.scattering_channels(system, E).unitarity_defect for E in (0.8, 1.5, 3.0, 6.0))
    refl = max(channels.scattering_scalar(model.builtin_soliton(1.0), E).total_reflection for E in (0.5, 1.0, 5.0))
    record(8, "scattering unitarity", {"scalar 1e-8": worst_s < 1e-8, "multichannel 1e-8": worst_m < 1e-8,
                                       "soliton |R| < 1e-6": refl < 1e-6},
           f"scalar {worst_s:.1e}, multichannel {worst_m:.1e}, soliton |R| {refl:.1e}")


def test_09_transparent(record):
    refl = dec = 0.0
    detuned = []
    for v in ("a", "b"):
        system = model.builtin_transparent_pair(v, 1.0)
        rep = channels.verify_transparent(system, (0.3, 1.0, 5.0))
        refl, dec = max(refl, max(rep.reflection)), max(dec, rep.decoupling)
        off = channels.verify_transparent(channels.detuned(system, 1.1), (0.3, 1.0, 5.0))
        detuned.append(off.reflection)
    low = min(min(r[:2]) for r in detuned)
    record(9, "transparent interaction matrices", {"|R| < 1e-6": refl < 1e-6, "decoupling < 1e-12": dec < 1e-12,
                                                   "10% detuning |R| > 1e-3": low > 1e-3},
           f"|R| {refl:.1e}, decoupling {dec:.1e}, detuned |R| at E=0.3,1: >= {low:.1e} "
           f"(E=5: {min(r[2] for r in detuned):.1e})")


def test_10_inversion_signs(record):
    rng = np.random.default_rng(7)
    v = rng.normal(size=1000)
    pa = rng.normal(size=1000)
    pb = rng.normal(size=1000)
    _, inv = channels.classify(v, pa, pb)
    table_ok = bool(np.array_equal(inv, pa * pb < 0))
    sech = lambda d, s=1.0: Analytic("sech2", {"depth": d, "scale": s})  # noqa: E731
    system = ChannelSystemSpec((0.0, 0.5), ((sech(-1.0), sech(0.8)), (sech(0.8), sech(0.5, 1.5))))
    tr = integrate_channels(system, 0.3, -8.0, 8.0, ((0.0, 0.0), (1.0, 0.0)))
    eff = channels.effective_potential(tr, system, 0)
    idx = rng.choice(np.nonzero(~eff.mask)[0], 1000, replace=False)
    trace_ok = bool(np.array_equal(eff.inverted[idx, 1], tr.psi[idx, 0] * tr.psi[idx, 1] < 0))
    record(10, "effective-potential inversion", {"random table": table_ok, "trace samples": trace_ok},
           f"{int(inv.sum())} + {int(eff.inverted[idx, 1].sum())} inverted of 1000 + 1000")


def test_11_complex_gap(record):
    E, t = 2.5, 0.8
    tr = cx.ri_integrate(COSINE, SINE, E, (1.0, -0.3), (0.5, 1.0), 0.0, 2 * A, t=t)
    psi, _ = oracles.complex_solve(lambda x: 2 * math.cos(2 * x) + 2j * t * math.sin(2 * x), E,
                                   (1.0 + 0.5j, -0.3 + 1.0j), 0.0, 2 * A, tr.x)
    ri_err = float(np.abs(tr.psi[:, 0] + 1j * tr.psi[:, 1] - psi).max())
    fam = cx.ComplexLattice(COSINE, SINE)
    tab = cx.gap_width_scan(fam, [0.0, 1.0])
    real_w = bands.zone_edges(COSINE, 0.1, 9.0).gap(0).width
    spec = cx.complex_spectrum(fam, np.linspace(0.1, 9.0, 400))
    record(11, "complex gap vanishing", {
        "ri vs complex 1e-9": ri_err < 1e-9,
        "t=0 width 1e-6": abs(tab.width[0] - real_w) < 1e-6,
        "cexp all in spectrum": bool(spec.in_spectrum.all()) and tab.width[-1] < 1e-6,
    }, f"ri err {ri_err:.1e}, t=0 width {tab.width[0]:.10f}, max distance {spec.distance.max():.1e}")


def test_12_bsec(record):
    rng = np.random.default_rng(12)
    worst = {"ode": 0.0, "jump": 0.0, "leak": 0.0, "tail": 0.0}
    passed = 0
    weakest = math.inf
    for _ in range(20):
        L, n, kappa = float(rng.uniform(1.0, 4.0)), int(rng.integers(1, 4)), float(rng.uniform(0.5, 3.0))
        A0 = float(rng.uniform(0.3, 2.0) * rng.choice([-1, 1]))
        AL = float(rng.uniform(0.3, 2.0) * rng.choice([-1, 1]))
        sol = bsec.construct(None, (n * math.pi / L) ** 2 + kappa ** 2, L=L, n=n, A0=A0, AL=AL)
        rep = bsec.verify(sol)
        passed += rep.passed
        worst = {"ode": max(worst["ode"], rep.ode_residual), "jump": max(worst["jump"], rep.jump_residual),
                 "leak": max(worst["leak"], rep.leakage), "tail": max(worst["tail"], rep.tail_error)}
        for name in bsec.STRENGTHS:
            weakest = min(weakest, bsec.verify(sol.detuned(name, 1.01)).leakage)
    record(12, "BSEC", {"20 sets pass": passed == 20, "detuning leakage > 1e-4": weakest > 1e-4},
           f"worst ode {worst['ode']:.1e} jump {worst['jump']:.1e} leakage {worst['leak']:.1e} "
           f"tail {worst['tail']:.1e}; smallest detuned leakage {weakest:.1e}")


def test_13_cli_determinism(record):
    same_golden = []
    for command in cli.COMMANDS:
        buf = io.StringIO()
        code = cli.run([command, "--config", os.path.join(ROOT, "configs", f"{command}.json"), "--format", "json"],
                       stdout=buf)
        with open(os.path.join(ROOT, "tests", "golden", f"{command}.json"), newline="") as f:
            same_golden.append(code == 0 and buf.getvalue() == f.read())
    runs = []
    for _ in range(2):
        buf = io.StringIO()
        cli.run(["channels", "--config", os.path.join(ROOT, "configs", "channels.json")], stdout=buf)
        runs.append(buf.getvalue().encode())
    record(13, "CLI determinism", {"10 commands byte-identical to golden": all(same_golden),
                                   "repeat run identical": runs[0] == runs[1]},
           f"{sum(same_golden)}/10 golden matches")
