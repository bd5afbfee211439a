"""
Command-line front end.

    wavebend <command> --config FILE [--out PATH] [--format csv|json]
                       [--samples N] [--h STEP]

Configs are JSON objects with ``"schema": 1``; unknown keys are rejected.
Exit status: 0 on success, 1 for usage or configuration errors, 2 when a
computation fails.  Output is byte-stable: floats use 17 significant
digits, columns and keys have a fixed order.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys

import numpy as np

from . import bands, bsec, channels, cxperiodic, model
from .errors import SpecError, WavebendError
from .propagate import find_knots, integrate_channels, integrate_scalar, residual_check

SCHEMA = 1
COMMANDS = ("bands", "gap", "beats", "tamm", "scatter", "channels", "transparent", "complexbands", "bsec",
            "residual")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# numbers and specs
# ---------------------------------------------------------------------------

_PI = re.compile(r"^\s*(-?\d*\.?\d*(?:e-?\d+)?)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def number(v, what="value"):
    """A JSON number, or a string such as "pi", "2*pi", "pi/2"."""
    if isinstance(v, bool):
        raise ConfigError(f"{what}: expected a number")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        m = _PI.match(v)
        if m:
            c = m.group(1)
            coef = -1.0 if c == "-" else (float(c) if c else 1.0)
            div = float(m.group(2)) if m.group(2) else 1.0
            return coef * math.pi / div
        try:
            return float(v)
        except ValueError:
            pass
    raise ConfigError(f"{what}: cannot read {v!r} as a number")


def _keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(extra)}")


def _elements(items, where):
    out = []
    for i, e in enumerate(items):
        w = f"{where}[{i}]"
        kind = e.get("kind") if isinstance(e, dict) else None
        if kind == "const":
            _keys(e, ("kind", "width", "height"), w)
            out.append(model.ConstSegment(number(e["width"], w), number(e.get("height", 0.0), w)))
        elif kind == "delta":
            _keys(e, ("kind", "strength"), w)
            out.append(model.DeltaSpike(number(e["strength"], w)))
        else:
            raise ConfigError(f"{w}: element kind must be 'const' or 'delta'")
    return tuple(out)


_BUILTINS = {
    "dirac_comb": (model.builtin_dirac_comb, {"g": 2.0, "a": math.pi}),
    "free_lattice": (model.builtin_free_lattice, {"a": math.pi}),
    "kronig_penney": (model.builtin_kronig_penney, {"height": 1.0, "barrier": 1.0, "well": 1.0}),
    "soliton": (model.builtin_soliton, {"kappa": 1.0, "center": 0.0}),
    "transparent_pair": (model.builtin_transparent_pair, {"variant": "a", "kappa": 1.0, "center": 0.0}),
}


def spec_from_dict(d, where="spec"):
    """Build a potential, channel system or complex lattice from its JSON form."""
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError(f"{where}: expected an object with a 'type'")
    t = d["type"]
    try:
        if t == "piecewise":
            _keys(d, ("type", "start", "elements"), where)
            return model.check(model.Piecewise(_elements(d["elements"], where), number(d.get("start", 0.0))))
        if t == "lattice":
            _keys(d, ("type", "period", "cell"), where)
            return model.check(model.Lattice(_elements(d["cell"], where), number(d["period"], where)))
        if t == "analytic":
            _keys(d, ("type", "form", "params"), where)
            params = {k: number(v, f"{where}.params.{k}") for k, v in d.get("params", {}).items()}
            return model.check(model.Analytic(d["form"], params))
        if t == "builtin":
            _keys(d, ("type", "name", "args"), where)
            if d["name"] not in _BUILTINS:
                raise ConfigError(f"{where}: unknown builtin {d['name']!r}")
            fn, defaults = _BUILTINS[d["name"]]
            args = dict(defaults)
            given = d.get("args", {})
            _keys(given, tuple(defaults), f"{where}.args")
            for k, v in given.items():
                args[k] = v if k == "variant" else number(v, f"{where}.args.{k}")
            return fn(**args)
        if t == "channels":
            _keys(d, ("type", "thresholds", "matrix", "point_couplings"), where)
            mat = tuple(tuple(spec_from_dict(e, f"{where}.matrix") for e in row) for row in d["matrix"])
            pcs = []
            for i, pc in enumerate(d.get("point_couplings", [])):
                _keys(pc, ("position", "strengths"), f"{where}.point_couplings[{i}]")
                pcs.append(model.PointCoupling(number(pc["position"]),
                                               tuple(tuple(number(v) for v in row) for row in pc["strengths"])))
            thr = tuple(number(v, f"{where}.thresholds") for v in d["thresholds"])
            return model.check(model.ChannelSystemSpec(thr, mat, tuple(pcs)))
        if t == "complex_lattice":
            _keys(d, ("type", "real", "imag", "t"), where)
            return cxperiodic.ComplexLattice(spec_from_dict(d["real"], f"{where}.real"),
                                             spec_from_dict(d["imag"], f"{where}.imag"), number(d.get("t", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"{where}: missing field {exc.args[0]!r}") from None
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unknown spec type {t!r}")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v) + 0.0  # no negative zero
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _json(v, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json(v[k], indent + 1)}" for k in sorted(v)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        if len(v) == 0:
            return "[]"
        items = [pad + _json(x, indent + 1) for x in v]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v) + 0.0
        return "null" if not math.isfinite(v) else format(v, ".17g")
    if isinstance(v, complex):
        return _json({"re": v.real, "im": v.imag}, indent)
    return json.dumps(str(v))


def to_json(obj) -> str:
    return _json(obj) + "\n"


class Result:
    """What a command produced: a table and a JSON document."""

    def __init__(self, columns, rows, doc=None):
        self.columns = list(columns)
        self.rows = list(rows)
        self.doc = {"rows": self.rows} if doc is None else doc

    def render(self, fmt: str) -> str:
        return to_csv(self.columns, self.rows) if fmt == "csv" else to_json(self.doc)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

COMMON = ("schema", "h", "samples")
FIELDS = {
    "bands": ("spec", "emin", "emax"),
    "gap": ("spec", "emin", "emax", "gap_index", "energies", "n_periods"),
    "beats": ("spec", "energies", "n_periods"),
    "tamm": ("spec", "emin", "emax", "gap_index", "wall", "verify_periods"),
    "scatter": ("spec", "energies", "window"),
    "channels": ("spec", "energies", "window"),
    "transparent": ("variant", "kappa", "energies", "detune"),
    "complexbands": ("spec", "t_grid", "gap_index", "emin", "emax"),
    "bsec": ("E", "eps2", "L", "n", "A0", "AL", "margin"),
    "residual": ("spec", "E", "x0", "x1", "psi0", "dpsi0"),
}


def _floats(cfg, key, default=None):
    v = cfg.get(key, default)
    if v is None:
        raise ConfigError(f"missing field {key!r}")
    if isinstance(v, (int, float, str)) and not isinstance(v, bool):
        v = [v]
    out = [number(x, key) for x in v]
    if not out:
        raise ConfigError(f"{key}: empty list")
    return out


def _int(cfg, key, default):
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key}: expected an integer")
    return v


def _spec(cfg):
    if "spec" not in cfg:
        raise ConfigError("missing field 'spec'")
    return spec_from_dict(cfg["spec"])


def _range(cfg, emin=0.1, emax=25.0):
    lo, hi = number(cfg.get("emin", emin), "emin"), number(cfg.get("emax", emax), "emax")
    if not hi > lo:
        raise ConfigError("empty range: emax must exceed emin")
    return lo, hi


def _h(opts):
    return opts["h"]


def cmd_bands(cfg, opts):
    lat = _spec(cfg)
    lo, hi = _range(cfg)
    step = None if opts["samples"] is None else (hi - lo) / opts["samples"]
    rep = bands.zone_edges(lat, lo, hi, step, h=_h(opts))
    rows = [{"kind": z.kind, "lower": z.lower, "upper": z.upper, "width": z.width,
             "lower_is_edge": z.lower_is_edge, "upper_is_edge": z.upper_is_edge} for z in rep.zones]
    cols = ["kind", "lower", "upper", "width", "lower_is_edge", "upper_is_edge"]
    return Result(cols, rows, {"emin": lo, "emax": hi, "scan_step": rep.scan_step, "zones": rows,
                               "warnings": list(rep.warnings)})


def _pick_gap(cfg, lat, opts):
    if "gap" in cfg:
        return tuple(cfg["gap"])
    lo, hi = _range(cfg)
    return bands.zone_edges(lat, lo, hi, h=_h(opts)).gap(_int(cfg, "gap_index", 0))


def cmd_gap(cfg, opts):
    lat = _spec(cfg)
    g = _pick_gap(cfg, lat, opts)
    m = opts["samples"] or 11
    n_periods = _int(cfg, "n_periods", 10)
    rep = bands.permanent_resonance_report(lat, g, m=m, n_periods=n_periods, h=_h(opts))
    doc = {"gap": list(rep.gap), "period": rep.period, "edge_lambda": list(rep.edge_lambda),
           "claims": rep.claims, "rows": list(rep.rows)}
    if "energies" in cfg:
        doc["solutions"] = []
        for E in _floats(cfg, "energies"):
            p = bands.gap_solutions(lat, E, n_periods, h=_h(opts), check=False)
            doc["solutions"].append({"E": E, "lam_plus": p.lam_plus, "lam_minus": p.lam_minus,
                                     "growth_ratio_error": p.growth_ratio_error,
                                     "knot_shift_error": p.knot_shift_error,
                                     "knots_growing": list(p.knots_growing)})
    return Result(list(bands.ResonanceReport.columns), rep.rows, doc)


def cmd_beats(cfg, opts):
    lat = _spec(cfg)
    rows = []
    for E in _floats(cfg, "energies"):
        b = bands.beating_envelope(lat, E, _int(cfg, "n_periods", 100), h=_h(opts))
        rows.append({"E": E, "theta": b.theta, "lam_abs_plus": b.multiplier_abs[0],
                     "lam_abs_minus": b.multiplier_abs[1], "envelope_ratio": b.envelope_ratio,
                     "beat_period": b.beat_period, "predicted_period": b.predicted_period,
                     "relative_error": b.relative_error})
    return Result(list(rows[0]), rows)


def cmd_tamm(cfg, opts):
    lat = _spec(cfg)
    g = _pick_gap(cfg, lat, opts)
    wall = None if "wall" not in cfg else number(cfg["wall"], "wall")
    res = bands.tamm_search(lat, g, wall, opts["samples"] or 1000, h=_h(opts))
    rows = []
    for E in res.roots:
        c = bands.verify_tamm(lat, E, res.wall, _int(cfg, "verify_periods", 20), h=_h(opts))
        rows.append({"E": E, "wall": res.wall, "lam_minus": c.lam_minus, "decays": c.decays,
                     "bounded": c.bounded, "rate_error": c.rate_error})
    cols = ["E", "wall", "lam_minus", "decays", "bounded", "rate_error"]
    return Result(cols, rows, {"gap": list(bands._gap_bounds(g)), "wall": res.wall, "count": res.count,
                               "roots": rows, "switches": list(res.switches),
                               "edge_values": list(res.edge_values)})


def _window(cfg):
    if "window" not in cfg:
        return None
    w = _floats(cfg, "window")
    if len(w) != 2:
        raise ConfigError("window: expected [X_-, X_+]")
    return tuple(w)


def cmd_scatter(cfg, opts):
    p = _spec(cfg)
    rows = []
    for E in _floats(cfg, "energies"):
        r = channels.scattering_scalar(p, E, _window(cfg), h=_h(opts))
        rows.append({"E": E, "R2": float(abs(r.R[0, 0]) ** 2), "T2": float(abs(r.T[0, 0]) ** 2),
                     "unitarity_defect": r.unitarity_defect})
    return Result(["E", "R2", "T2", "unitarity_defect"], rows)


def cmd_channels(cfg, opts):
    system = _spec(cfg)
    if not isinstance(system, model.ChannelSystemSpec):
        raise ConfigError("spec: expected a 'channels' system")
    rows = []
    for E in _floats(cfg, "energies"):
        r = channels.scattering_channels(system, E, _window(cfg), h=_h(opts))
        for row in r.table():
            row["reciprocity_error"] = r.reciprocity_error
            rows.append(row)
    return Result(["E", "in", "out", "R2", "T2", "unitarity_defect", "reciprocity_error"], rows)


def cmd_transparent(cfg, opts):
    variant = opts.get("variant") or cfg.get("variant", "a")
    system = model.builtin_transparent_pair(variant, number(cfg.get("kappa", 1.0), "kappa"))
    detune = number(cfg.get("detune", 1.0), "detune")
    if detune != 1.0:
        system = channels.detuned(system, detune)
    energies = opts.get("energies") or _floats(cfg, "energies", [0.3, 1.0, 5.0])
    rep = channels.verify_transparent(system, energies, h=_h(opts))
    rows = [{"E": E, "reflection": r, "unitarity_defect": u, "decoupling": rep.decoupling, "pass": ok}
            for E, r, u, ok in zip(rep.energies, rep.reflection, rep.unitarity, rep.passed)]
    return Result(["E", "reflection", "unitarity_defect", "decoupling", "pass"], rows,
                  {"variant": variant, "detune": detune, "transparent": rep.transparent, "rows": rows})


def cmd_complexbands(cfg, opts):
    fam = _spec(cfg)
    if not isinstance(fam, cxperiodic.ComplexLattice):
        raise ConfigError("spec: expected a 'complex_lattice'")
    lo, hi = _range(cfg, 0.1, 9.0)
    tab = cxperiodic.gap_width_scan(fam, _floats(cfg, "t_grid", [0.0, 0.5, 1.0]), _int(cfg, "gap_index", 0),
                                    lo, hi, opts["samples"] or 150, h=_h(opts))
    rows = [{"t": t, "width": w, "lower": a, "upper": b, "merged": m}
            for t, w, a, b, m in zip(tab.t, tab.width, tab.lower, tab.upper, tab.merged)]
    return Result(["t", "width", "lower", "upper", "merged"], rows,
                  {"gap_index": tab.gap_index, "monotone_shrink": tab.monotone_shrink, "rows": rows})


def cmd_bsec(cfg, opts):
    E = None if cfg.get("E") is None else number(cfg["E"], "E")
    sol = bsec.construct(E, number(cfg.get("eps2", 2.0), "eps2"), number(cfg.get("L", math.pi), "L"),
                         _int(cfg, "n", 1), number(cfg.get("A0", 1.0), "A0"), number(cfg.get("AL", 1.0), "AL"))
    h = opts["h"] if opts["h_given"] else None
    rep = bsec.verify(sol, number(cfg.get("margin", 5.0), "margin"), h=h)
    tr = rep.trace
    step = max(1, len(tr.x) // opts["samples"]) if opts["samples"] else 1
    rows = [{"x": tr.x[i], "psi_1": tr.psi[i, 0], "dpsi_1": tr.dpsi[i, 0], "psi_2": tr.psi[i, 1],
             "dpsi_2": tr.dpsi[i, 1]} for i in range(0, len(tr.x), step)]
    doc = {"params": sol.params(), "verify": rep.summary(), "passed": rep.passed}
    return Result(["x", "psi_1", "dpsi_1", "psi_2", "dpsi_2"], rows, doc)


def cmd_residual(cfg, opts):
    spec = _spec(cfg)
    E = number(cfg["E"], "E") if "E" in cfg else 1.0
    x0, x1 = number(cfg.get("x0", 0.0), "x0"), number(cfg.get("x1", 10.0), "x1")
    psi0 = _floats(cfg, "psi0", [0.0])
    dpsi0 = _floats(cfg, "dpsi0", [1.0])
    if isinstance(spec, model.ChannelSystemSpec):
        tr = integrate_channels(spec, E, x0, x1, (psi0, dpsi0), _h(opts))
    else:
        tr = integrate_scalar(spec, E, x0, x1, (psi0[0], dpsi0[0]), _h(opts))
    res = residual_check(tr)
    step = max(1, len(tr.x) // opts["samples"]) if opts["samples"] else 1
    rows = []
    cols = ["x"]
    for c in range(tr.n):
        cols += [f"psi_{c + 1}", f"dpsi_{c + 1}", f"residual_{c + 1}", f"bending_{c + 1}"]
    for i in range(0, len(tr.x), step):
        row = {"x": tr.x[i]}
        for c in range(tr.n):
            row[f"psi_{c + 1}"] = float(np.real(tr.psi[i, c]))
            row[f"dpsi_{c + 1}"] = float(np.real(tr.dpsi[i, c]))
            row[f"residual_{c + 1}"] = float(res.residual[i, c])
            row[f"bending_{c + 1}"] = int(res.bending[i, c])
        rows.append(row)
    doc = {"E": E, "max_residual": res.max_residual, "mismatches": res.mismatches, "checked": res.checked,
           "knots": [list(find_knots(tr, c)) for c in range(tr.n)] if tr.is_real else None}
    return Result(cols, rows, doc)


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parser():
    p = _Parser(prog="wavebend", description="Wave bending, band gaps and channel coupling in 1D.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--samples", type=int, help="sample count; its meaning depends on the command")
    p.add_argument("--h", type=float, help="integration step")
    p.add_argument("--variant", choices=("a", "b"), help="transparent: interaction-matrix variant")
    p.add_argument("--energies", help="transparent: comma-separated energies")
    return p


def load_config(path, command):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema") != SCHEMA:
        raise ConfigError(f"config must declare \"schema\": {SCHEMA}")
    _keys(cfg, COMMON + FIELDS[command] + (("gap",) if command in ("gap", "tamm") else ()), "config")
    if isinstance(cfg.get("spec"), str):
        # a spec file, relative to the config
        path = os.path.join(os.path.dirname(os.path.abspath(path)), cfg["spec"])
        try:
            with open(path) as f:
                cfg["spec"] = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read spec file {cfg['spec']!r}: {exc}") from None
    return cfg


def run(argv=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    try:
        args = _parser().parse_args(argv)
        cfg = load_config(args.config, args.command)
        samples = args.samples if args.samples is not None else cfg.get("samples")
        if samples is not None and (isinstance(samples, bool) or not isinstance(samples, int) or samples < 2):
            raise ConfigError("samples must be an integer >= 2")
        h = args.h if args.h is not None else cfg.get("h")
        h_given = h is not None
        h = 1e-3 if h is None else number(h, "h")
        if not h > 0:
            raise ConfigError("h must be > 0")
        opts = {"samples": samples, "h": h, "h_given": h_given, "variant": args.variant, "energies": None}
        if args.energies:
            opts["energies"] = [number(v.strip(), "energies") for v in args.energies.split(",")]
        result = HANDLERS[args.command](cfg, opts)
        text = result.render(args.format)
        if args.out:
            with open(args.out, "w", newline="") as f:
                f.write(text)
        else:
            stdout.write(text)
        return 0
    except ConfigError as exc:
        print(f"wavebend: config error: {exc}", file=sys.stderr)
        return 1
    except SpecError as exc:
        print(f"wavebend: SpecError: {exc}", file=sys.stderr)
        return 1
    except WavebendError as exc:
        print(f"wavebend: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
