"""Experiment runner: flat key=value configs in, CSV/JSON artifacts out.

Config files are UTF-8 text, one `key = value` pair per line, `#` starts a
comment.  Keys are dotted and flat (no sections); unknown keys are rejected.
Values are scalars, comma-separated lists of numbers, or semicolon-separated
planar points with space-separated coordinates:

    experiment = compare          # simulate | spectral | invariant |
    seed = 7                      #   trace | escape | compare
    measure.kind = point          # point | mixture | uniform | none
    measure.point = 0.5
    t_grid = 0.1, 0.5, 1.0
    x0 = -2 0; 0 0                # planar points

`elastic-jump run <config> [--out DIR] [--seed N] [--dump-paths N]` writes
RFC-4180 CSVs, a JSON manifest (config hash, seed, versions, wall time,
output checksums) and a plotting script; nothing is written until the whole
experiment has finished, so a failed run leaves no partial outputs.
`elastic-jump validate <config>` parses and echoes the resolved config.
Exit codes: 0 success, 2 config validation, 3 numerical gate.

Reruns with the same config and seed are byte-identical on every CSV: all
randomness is derived from the config seed, floats are written with repr
(shortest round-trip form), and row order is deterministic.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__, escape, geometry, invariant, measures, sde, spectral, trace
from .geometry import Disk, HalfLine, Interval
from .measures import (
    FiniteMixtureOfPointMasses,
    PointMass,
    UniformOnBall,
    UnsupportedDomain,
)

EXPERIMENTS = ("simulate", "spectral", "invariant", "trace", "escape", "compare")

# exceptions that mean "the run hit a numerical quality gate", exit code 3
GATE_EXCEPTIONS = (
    UnsupportedDomain,
    measures.QuadratureNotConverged,
    geometry.AmbiguousProjection,
    sde.StepTooLarge,
    sde.GridTooCoarse,
    spectral.RootBracketingFailed,
    spectral.HorizonExceeded,
    spectral.TailNotResolved,
    invariant.OutOfDomain,
    invariant.SuiteMemberNotInDomain,
    trace.InsufficientLevel,
    trace.AliasingDetected,
    escape.CensoringDominates,
)


class ValidationErrors(Exception):
    """All config problems at once, as (key path, message) pairs."""

    def __init__(self, errors):
        self.errors = sorted(errors)
        super().__init__("\n".join(f"{k}: {m}" for k, m in self.errors))


# --------------------------------------------------------------- value kinds


def _parse_int(s):
    return int(s.strip())


def _parse_float(s):
    v = float(s.strip())
    if math.isnan(v):
        raise ValueError("nan is not a valid value")
    return v


def _parse_floats(s):
    toks = [t.strip() for t in s.split(",") if t.strip()]
    if not toks:
        raise ValueError("empty list")
    return tuple(_parse_float(t) for t in toks)


def _parse_point(s):
    toks = s.replace(",", " ").split()
    if len(toks) == 1:
        return _parse_float(toks[0])
    if len(toks) == 2:
        return (_parse_float(toks[0]), _parse_float(toks[1]))
    raise ValueError("points have one or two coordinates")


def _parse_points(s):
    """Point lists: ";" between planar points, "," between scalar points."""
    if ";" in s:
        toks = [t.strip() for t in s.split(";") if t.strip()]
        if not toks:
            raise ValueError("empty point list")
        return tuple(_parse_point(t) for t in toks)
    if "," in s:
        return tuple(_parse_float(t) for t in s.split(",") if t.strip())
    if not s.strip():
        raise ValueError("empty point list")
    return (_parse_point(s),)


def _fmt_point(value):
    if isinstance(value, tuple):
        return f"{repr(float(value[0]))} {repr(float(value[1]))}"
    return repr(float(value))


def _fmt_points(value):
    if value and isinstance(value[0], tuple):
        return "; ".join(_fmt_point(p) for p in value)
    return ", ".join(repr(float(v)) for v in value)


_PARSERS = {
    "int": _parse_int,
    "float": _parse_float,
    "floats": _parse_floats,
    "point": _parse_point,
    "points": _parse_points,
    "str": lambda s: s.strip(),
}

_FORMATTERS = {
    "int": str,
    "float": lambda v: repr(float(v)),
    "floats": lambda v: ", ".join(repr(float(x)) for x in v),
    "point": _fmt_point,
    "points": _fmt_points,
    "str": str,
}


@dataclass(frozen=True)
class _Spec:
    kind: str
    default: object = None
    choices: tuple = None


_COMMON = {
    "experiment": _Spec("str"),
    "seed": _Spec("int", 0),
    "out": _Spec("str", "out"),
}

_MEASURE = {
    "measure.kind": _Spec("str", "none", ("none", "point", "mixture", "uniform")),
    "measure.point": _Spec("point"),
    "measure.points": _Spec("points"),
    "measure.weight": _Spec("float", 1.0),
    "measure.weights": _Spec("floats"),
    "measure.center": _Spec("point"),
    "measure.radius": _Spec("float"),
}

_DOMAIN = {
    "domain.kind": _Spec("str", "interval", ("interval", "halfline", "disk")),
    "domain.a": _Spec("float", 0.0),
    "domain.b": _Spec("float", 1.0),
    "domain.radius": _Spec("float", 1.0),
}

_SCHEMAS = {
    "simulate": {
        **_COMMON,
        **_DOMAIN,
        **_MEASURE,
        "x0": _Spec("point", 0.5),
        "T": _Spec("float", 10.0),
        "h": _Spec("float", 1e-3),
        "n_paths": _Spec("int", 200),
    },
    "spectral": {
        **_COMMON,
        **_MEASURE,
        "J": _Spec("int", 50),
        "delta_t": _Spec("float", 1e-3),
        "f": _Spec("str", "sinpi_plus_one", ("one", "sinpi", "sinpi_plus_one")),
        "t_grid": _Spec("floats", (0.1, 0.5, 1.0)),
        "x_grid": _Spec("floats", (0.25, 0.5, 0.75)),
        "z_grid": _Spec("floats", (1.0, 2.0, 5.0)),
    },
    "invariant": {
        **_COMMON,
        **_MEASURE,
        "n_grid": _Spec("int", 801),
    },
    "trace": {
        **_COMMON,
        **_MEASURE,
        "ell_star": _Spec("float", 0.25),
        "T": _Spec("float", 32.0),
        "h": _Spec("float", 5e-4),
        "n_paths": _Spec("int", 1500),
        "lams": _Spec("floats", (0.5, 1.0, 2.0)),
    },
    "escape": {
        **_COMMON,
        **_MEASURE,
        "eps_grid": _Spec("floats", (0.4, 0.2, 0.1, 0.05)),
        "n_paths": _Spec("int", 200),
        "h": _Spec("float", 2.5e-4),
        "t_max": _Spec("float", 500.0),
        "x0": _Spec("points", ((-2.0, 0.0),)),
        "dynamics": _Spec("str", "reflected", ("reflected", "jump", "both")),
        "renewal": _Spec("str", "no", ("yes", "no")),
        "target.center": _Spec("point", (2.0, 0.0)),
        "target.radius": _Spec("float", 0.2),
        "region.center": _Spec("point", (2.0, 0.0)),
        "region.radius": _Spec("float", 0.5),
    },
    "compare": {
        **_COMMON,
        **_MEASURE,
        "J": _Spec("int", 50),
        "delta_t": _Spec("float", 1e-3),
        "f": _Spec("str", "sinpi_plus_one", ("one", "sinpi", "sinpi_plus_one")),
        "t_grid": _Spec("floats", (0.1, 0.5, 1.0)),
        "x_grid": _Spec("floats", (0.25, 0.5, 0.75)),
        "n_paths": _Spec("int", 2000),
        "h": _Spec("float", 1e-4),
    },
}

_F_PRESETS = {
    "one": lambda x: np.ones_like(np.asarray(x, dtype=float)),
    "sinpi": lambda x: np.sin(np.pi * np.asarray(x, dtype=float)),
    "sinpi_plus_one": lambda x: np.sin(np.pi * np.asarray(x, dtype=float)) + 1.0,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved config: every schema key present, defaults filled."""

    values: dict

    @property
    def experiment(self):
        return self.values["experiment"]

    @property
    def seed(self):
        return self.values["seed"]

    @property
    def out(self):
        return self.values["out"]

    def __getitem__(self, key):
        return self.values[key]

    def replaced(self, **overrides):
        vals = dict(self.values)
        vals.update(overrides)
        return ExperimentConfig(vals)


def render_config(config):
    """Canonical text form; parse_config(render_config(c)) == c."""
    schema = _SCHEMAS[config.experiment]
    lines = [f"experiment = {config.experiment}"]
    for key in sorted(schema):
        if key == "experiment":
            continue
        value = config.values[key]
        if value is None:
            continue
        lines.append(f"{key} = {_FORMATTERS[schema[key].kind](value)}")
    return "\n".join(lines) + "\n"


# -------------------------------------------------------------- construction


def _build_measure(vals, errors, expect_dim):
    kind = vals["measure.kind"]
    if kind == "none":
        return None
    m = None
    try:
        if kind == "point":
            if vals["measure.point"] is None:
                errors.append(("measure.point", "required for point measures"))
                return None
            if not vals["measure.weight"] > 0:
                errors.append(("measure.weight", "must be positive"))
                return None
            m = PointMass(vals["measure.point"], vals["measure.weight"])
        elif kind == "mixture":
            pts, ws = vals["measure.points"], vals["measure.weights"]
            if pts is None or ws is None:
                errors.append(
                    ("measure.points", "mixtures need measure.points and measure.weights")
                )
                return None
            if any(w <= 0 for w in ws):
                errors.append(("measure.weights", "must be positive"))
                return None
            m = FiniteMixtureOfPointMasses(pts, ws)
        elif kind == "uniform":
            if vals["measure.center"] is None or vals["measure.radius"] is None:
                errors.append(
                    ("measure.center", "uniform needs measure.center and measure.radius")
                )
                return None
            if not vals["measure.weight"] > 0:
                errors.append(("measure.weight", "must be positive"))
                return None
            m = UniformOnBall(
                vals["measure.center"], vals["measure.radius"], vals["measure.weight"]
            )
    except ValueError as e:
        errors.append(("measure.kind", str(e)))
        return None
    if m is not None and m.dimension != expect_dim:
        errors.append(("measure.kind", f"needs a {expect_dim}-d measure"))
        return None
    return m


def _build_domain(vals, errors):
    kind = vals["domain.kind"]
    try:
        if kind == "interval":
            return Interval(vals["domain.a"], vals["domain.b"])
        if kind == "halfline":
            return HalfLine()
        return Disk(vals["domain.radius"])
    except ValueError as e:
        errors.append(("domain.kind", str(e)))
        return None


def _support_check(measure, domain, errors):
    if measure is None or domain is None:
        return
    try:
        measure.validate_support(domain)
    except UnsupportedDomain as e:
        errors.append(("measure", str(e)))


def _validate_simulate(vals, errors):
    domain = _build_domain(vals, errors)
    expect = domain.dimension if domain is not None else 1
    measure = _build_measure(vals, errors, expect)
    if measure is None and vals["measure.kind"] == "none":
        errors.append(("measure.kind", "simulate needs a restart measure"))
    _support_check(measure, domain, errors)
    if not vals["T"] > 0:
        errors.append(("T", "must be positive"))
    if not vals["h"] > 0:
        errors.append(("h", "must be positive"))
    elif vals["h"] > vals["T"]:
        errors.append(("h", "exceeds T"))
    if vals["n_paths"] < 1:
        errors.append(("n_paths", "must be at least 1"))
    if domain is not None:
        x0 = np.asarray(vals["x0"], dtype=float)
        if (domain.dimension == 1) != (x0.ndim == 0):
            errors.append(("x0", "dimension mismatch with the domain"))
        elif domain.signed_distance(x0) > 0:
            errors.append(("x0", "lies outside the domain"))


def _validate_series(vals, errors, with_mc):
    measure = _build_measure(vals, errors, 1)
    if measure is None and vals["measure.kind"] == "none":
        errors.append(("measure.kind", "a restart measure is required"))
    _support_check(measure, Interval(0.0, 1.0), errors)
    if any(t <= 0 for t in vals["t_grid"]):
        errors.append(("t_grid", "times must be positive"))
    if any(not 0 < x < 1 for x in vals["x_grid"]):
        errors.append(("x_grid", "points must lie inside (0, 1)"))
    if vals["J"] < 4:
        errors.append(("J", "need at least 4 modes"))
    T = max(vals["t_grid"], default=1.0)
    if not vals["delta_t"] > 0:
        errors.append(("delta_t", "must be positive"))
    elif vals["delta_t"] > T / 100:
        errors.append(("delta_t", f"too coarse: need delta_t <= {T / 100!r}"))
    if with_mc:
        if not vals["h"] > 0:
            errors.append(("h", "must be positive"))
        elif vals["t_grid"] and vals["h"] > min(vals["t_grid"]):
            errors.append(("h", "exceeds the smallest time in t_grid"))
        if vals["n_paths"] < 2:
            errors.append(("n_paths", "must be at least 2"))


def _validate_invariant(vals, errors):
    measure = _build_measure(vals, errors, 1)
    if measure is None and vals["measure.kind"] == "none":
        errors.append(("measure.kind", "a restart measure is required"))
    _support_check(measure, Interval(0.0, 1.0), errors)
    if vals["n_grid"] < 9:
        errors.append(("n_grid", "need at least 9 grid nodes"))


def _validate_trace(vals, errors):
    measure = _build_measure(vals, errors, 1)
    _support_check(measure, HalfLine(), errors)
    if not vals["ell_star"] > 0:
        errors.append(("ell_star", "must be positive"))
    if not vals["h"] > 0:
        errors.append(("h", "must be positive"))
    elif vals["h"] > vals["T"]:
        errors.append(("h", "exceeds T"))
    if vals["n_paths"] < 2:
        errors.append(("n_paths", "must be at least 2"))
    if any(l <= 0 for l in vals["lams"]):
        errors.append(("lams", "rates must be positive"))


def _escape_config(vals):
    return escape.EscapeConfig(
        target_center=vals["target.center"],
        target_radius=vals["target.radius"],
        measure=None,
        region_center=vals["region.center"],
        region_radius=vals["region.radius"],
        eps_grid=vals["eps_grid"],
        n_paths=vals["n_paths"],
        h=vals["h"],
        t_max=vals["t_max"],
    )


def _validate_escape(vals, errors):
    measure = _build_measure(vals, errors, 2)
    cfg = None
    try:
        cfg = _escape_config(vals)
        if measure is not None:
            cfg = replace(cfg, measure=measure)
    except ValueError as e:
        errors.append(("escape", str(e)))
    except UnsupportedDomain as e:
        errors.append(("measure", str(e)))
    if measure is None:
        if vals["dynamics"] in ("jump", "both"):
            errors.append(("dynamics", "jump dynamics needs a restart measure"))
        if vals["renewal"] == "yes":
            errors.append(("renewal", "the renewal bound needs a restart measure"))
    if cfg is not None:
        for eps in vals["eps_grid"]:
            domain = cfg.domain(eps)
            if measure is not None:
                try:
                    measure.validate_support(domain)
                except UnsupportedDomain as e:
                    errors.append(("measure", f"eps={eps}: {e}"))
            for p in vals["x0"]:
                if not isinstance(p, tuple):
                    errors.append(("x0", "escape starts are planar points"))
                elif domain.signed_distance(np.asarray(p)) > 0:
                    errors.append(("x0", f"{p} outside the domain at eps={eps}"))


_VALIDATORS = {
    "simulate": _validate_simulate,
    "spectral": lambda v, e: _validate_series(v, e, with_mc=False),
    "invariant": _validate_invariant,
    "trace": _validate_trace,
    "escape": _validate_escape,
    "compare": lambda v, e: _validate_series(v, e, with_mc=True),
}


def parse_config(text):
    """Parse and validate; raises ValidationErrors listing every problem."""
    errors = []
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            errors.append((f"line {lineno}", "expected key = value"))
            continue
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if key in raw:
            errors.append((key, "duplicate key"))
            continue
        raw[key] = value

    experiment = raw.pop("experiment", None)
    if experiment is None:
        errors.append(("experiment", "required"))
    elif experiment not in EXPERIMENTS:
        errors.append(("experiment", f"must be one of {', '.join(EXPERIMENTS)}"))
        experiment = None
    if experiment is None:
        raise ValidationErrors(errors)

    schema = _SCHEMAS[experiment]
    vals = {"experiment": experiment}
    for key, spec in schema.items():
        if key == "experiment":
            continue
        if key in raw:
            try:
                value = _PARSERS[spec.kind](raw.pop(key))
                if spec.choices is not None and value not in spec.choices:
                    errors.append((key, f"must be one of {', '.join(spec.choices)}"))
                    value = spec.default
            except ValueError as e:
                errors.append((key, str(e)))
                value = spec.default
        else:
            value = spec.default
        vals[key] = value
    for key in sorted(raw):
        errors.append((key, f"unknown key for experiment {experiment}"))

    if vals.get("seed") is not None and vals["seed"] < 0:
        errors.append(("seed", "must be nonnegative"))

    # key-level failures fall back to typed defaults above, so semantic
    # validation can still run and the error list is complete in one pass
    _VALIDATORS[experiment](vals, errors)
    if errors:
        raise ValidationErrors(errors)
    return ExperimentConfig(vals)


# ------------------------------------------------------------------- outputs


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _child_seed(seed, *tags):
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


def _run_simulate(config, dump_paths):
    vals = config.values
    errors = []
    domain = _build_domain(vals, errors)
    measure = _build_measure(vals, errors, domain.dimension)
    dim = domain.dimension
    rows = []
    files = {}
    for i in range(vals["n_paths"]):
        rng = np.random.default_rng([vals["seed"], i])
        path = sde.simulate_path(domain, measure, vals["x0"], vals["T"], vals["h"], rng)
        final = path.positions[-1]
        coords = [final] if dim == 1 else list(final)
        rows.append([i, *coords, path.local_time[-1], path.jump_count])
        if i < dump_paths:
            flags = path.jump_flags
            if dim == 1:
                prows = zip(path.times, path.positions, path.local_time, flags.astype(int))
                header = ["t", "x", "local_time", "jumped"]
            else:
                prows = (
                    (t, p[0], p[1], l, int(fl))
                    for t, p, l, fl in zip(
                        path.times, path.positions, path.local_time, flags
                    )
                )
                header = ["t", "x", "y", "local_time", "jumped"]
            files[f"path_{i:03d}.csv"] = _csv_text(header, prows)
    header = ["path_id", "x_T", "local_time_T", "n_jumps"]
    if dim == 2:
        header = ["path_id", "x_T", "y_T", "local_time_T", "n_jumps"]
    files["paths.csv"] = _csv_text(header, rows)
    return files


def _spectral_pieces(vals):
    measure = _build_measure(vals, [], 1)
    kappa = measure.total_mass
    f = _F_PRESETS[vals["f"]]
    basis = spectral.robin_eigenbasis_interval(kappa, vals["J"])
    coeffs = spectral.project_coefficients(f, measure, basis)
    T = max(vals["t_grid"])
    if vals.get("z_grid"):
        # the transform tail gate needs c(T) e^{-zT} resolved to ~1e-6
        T = max(T, 16.0 / min(vals["z_grid"]))
    c = spectral.solve_volterra(basis, coeffs, kappa, T, vals["delta_t"])
    return measure, kappa, f, basis, coeffs, c


def _run_spectral(config, dump_paths):
    vals = config.values
    _, kappa, _, basis, coeffs, c = _spectral_pieces(vals)
    sol_rows = [
        [t, x, spectral.evaluate_solution(basis, coeffs, c, t, x)]
        for t in vals["t_grid"]
        for x in vals["x_grid"]
    ]
    c_rows = list(zip(np.asarray(c.times), np.asarray(c.values)))
    lap_rows = [
        [z, spectral.laplace_check(c, basis, coeffs, kappa, [z])]
        for z in vals["z_grid"]
    ]
    return {
        "solution.csv": _csv_text(["t", "x", "u"], sol_rows),
        "c.csv": _csv_text(["t", "c"], c_rows),
        "laplace.csv": _csv_text(["z", "rel_residual"], lap_rows),
    }


def _run_invariant(config, dump_paths):
    vals = config.values
    measure = _build_measure(vals, [], 1)
    kappa = measure.total_mass
    grid = np.linspace(0.0, 1.0, vals["n_grid"])
    density = invariant.invariant_density(measure, kappa, grid=grid)
    s = invariant.s_identity(measure, kappa)
    suite = invariant.domain_suite(measure, kappa)
    resid = invariant.stationarity_residual(suite, measure, density)
    dens_rows = list(zip(density.grid, density.phi, density.pi))
    check_rows = [
        ["s_identity", s],
        ["s_identity_abs_error", abs(s - 2.0)],
        ["stationarity_max_residual", resid],
    ]
    return {
        "invariant.csv": _csv_text(["x", "phi", "pi"], dens_rows),
        "checks.csv": _csv_text(["name", "value"], check_rows),
    }


def _run_trace(config, dump_paths):
    vals = config.values
    measure = _build_measure(vals, [], 1)
    sample = trace.first_passage_ensemble(
        measure, vals["ell_star"], vals["T"], vals["h"], vals["n_paths"], vals["seed"]
    )
    est = trace.inverse_local_time_exponent(sample, vals["lams"])
    rows = [
        [lam, psi, se, trace.psi_prediction(measure, lam)]
        for lam, psi, se in zip(est.lams, est.psi, est.std_error)
    ]
    files = {
        "exponent.csv": _csv_text(["lam", "psi_hat", "std_error", "prediction"], rows)
    }
    for i in range(min(dump_paths, vals["n_paths"])):
        path = trace.simulate_halfline(
            measure, 0.0, vals["T"], vals["h"], _child_seed(vals["seed"], 7, i)
        )
        files[f"path_{i:03d}.csv"] = _csv_text(
            ["t", "x", "local_time", "jumped"],
            zip(path.times, path.positions, path.local_time, path.jump_flags.astype(int)),
        )
    return files


def _run_escape(config, dump_paths):
    vals = config.values
    measure = _build_measure(vals, [], 2)
    cfg = _escape_config(vals)
    if measure is not None:
        cfg = replace(cfg, measure=measure)
    rows = []
    if vals["dynamics"] in ("reflected", "both"):
        rows += escape.mfpt_reflected(cfg, vals["x0"], _child_seed(vals["seed"], 1))
    if vals["dynamics"] in ("jump", "both"):
        rows += escape.mfpt_jump(cfg, vals["x0"], _child_seed(vals["seed"], 2))
    csv_rows = [
        [r.eps, _fmt_point(r.x0), r.dynamics, r.mfpt, r.std_error, r.censored_frac]
        for r in rows
    ]
    files = {
        "mfpt.csv": _csv_text(
            ["eps", "x0", "dynamics", "mfpt", "stderr", "censored_frac"], csv_rows
        )
    }
    if vals["renewal"] == "yes":
        bounds = escape.renewal_bound(cfg, _child_seed(vals["seed"], 3))
        sups = escape.sup_mfpt_jump(cfg, _child_seed(vals["seed"], 4))
        summary = {
            "alpha0": cfg.alpha0,
            "measure_checksum": cfg.measure_checksum,
            "per_eps": [
                {
                    "eps": rb.eps,
                    "S_hat": rb.s_hat,
                    "S_se": rb.s_se,
                    "R0_hat": rb.r0_hat,
                    "R0_se": rb.r0_se,
                    "bound": rb.bound,
                    "bound_se": rb.bound_se,
                    "M_hat": m_hat,
                    "M_se": m_se,
                }
                for rb, (_, m_hat, m_se) in zip(bounds, sups)
            ],
        }
        files["summary.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    return files


def _run_compare(config, dump_paths):
    vals = config.values
    measure, kappa, f, basis, coeffs, c = _spectral_pieces(vals)
    domain = Interval(0.0, 1.0)
    t_list = list(vals["t_grid"])
    rows = []
    for jx, x in enumerate(vals["x_grid"]):
        u_spec = [
            spectral.evaluate_solution(basis, coeffs, c, t, x) for t in t_list
        ]
        jump = sde.semigroup_estimate(
            f, domain, measure, x, t_list, vals["n_paths"], vals["h"],
            _child_seed(vals["seed"], 1, jx),
        )
        elastic = sde.elastic_functional(
            f, domain, kappa, c, x, t_list, vals["n_paths"], vals["h"],
            _child_seed(vals["seed"], 2, jx),
        )
        for t, us, rj, re in zip(t_list, u_spec, jump, elastic):
            rows.append([t, x, us, rj.mean, re.mean, max(rj.std_error, re.std_error)])
    rows.sort(key=lambda r: (r[0], r[1]))
    return {
        "compare.csv": _csv_text(
            ["t", "x", "u_spectral", "u_mc_jump", "u_mc_elastic", "sigma"], rows
        )
    }


_RUNNERS = {
    "simulate": _run_simulate,
    "spectral": _run_spectral,
    "invariant": _run_invariant,
    "trace": _run_trace,
    "escape": _run_escape,
    "compare": _run_compare,
}

_PLOT_SCRIPTS = {
    "simulate": """\
import csv
import matplotlib.pyplot as plt

with open("paths.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))
plt.hist([float(r["x_T"]) for r in rows], bins=30, density=True)
plt.xlabel("X_T")
plt.ylabel("density")
plt.title("terminal positions")
plt.savefig("paths.png", dpi=150)
""",
    "spectral": """\
import csv
import matplotlib.pyplot as plt

with open("c.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))
plt.plot([float(r["t"]) for r in rows], [float(r["c"]) for r in rows])
plt.xlabel("t")
plt.ylabel("c(t)")
plt.title("boundary trace")
plt.savefig("c.png", dpi=150)
""",
    "invariant": """\
import csv
import matplotlib.pyplot as plt

with open("invariant.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))
plt.plot([float(r["x"]) for r in rows], [float(r["pi"]) for r in rows])
plt.xlabel("x")
plt.ylabel("pi(x)")
plt.title("invariant density")
plt.savefig("invariant.png", dpi=150)
""",
    "trace": """\
import csv
import matplotlib.pyplot as plt

with open("exponent.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))
lams = [float(r["lam"]) for r in rows]
plt.errorbar(lams, [float(r["psi_hat"]) for r in rows],
             yerr=[float(r["std_error"]) for r in rows], fmt="o", label="estimate")
plt.plot(lams, [float(r["prediction"]) for r in rows], "k--", label="prediction")
plt.xlabel("lambda")
plt.ylabel("psi")
plt.legend()
plt.savefig("exponent.png", dpi=150)
""",
    "escape": """\
import csv
from collections import defaultdict
import matplotlib.pyplot as plt

with open("mfpt.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))
series = defaultdict(list)
for r in rows:
    series[(r["dynamics"], r["x0"])].append((float(r["eps"]), float(r["mfpt"])))
for (dyn, x0), pts in sorted(series.items()):
    pts.sort()
    plt.plot([1.0 / e for e, _ in pts], [m for _, m in pts], "o-",
             label=f"{dyn} from {x0}")
plt.xscale("log")
plt.xlabel("1/eps")
plt.ylabel("MFPT")
plt.legend()
plt.savefig("mfpt.png", dpi=150)
""",
    "compare": """\
import csv
import matplotlib.pyplot as plt

with open("compare.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))
xs = range(len(rows))
plt.errorbar(xs, [float(r["u_mc_jump"]) for r in rows],
             yerr=[3 * float(r["sigma"]) for r in rows], fmt="o", label="MC jump")
plt.plot(xs, [float(r["u_mc_elastic"]) for r in rows], "s", label="MC elastic")
plt.plot(xs, [float(r["u_spectral"]) for r in rows], "k_", ms=16, label="spectral")
plt.xticks(xs, [f"t={r['t']}, x={r['x']}" for r in rows], rotation=45, ha="right")
plt.ylabel("u(t, x)")
plt.legend()
plt.tight_layout()
plt.savefig("compare.png", dpi=150)
""",
}


def run_experiment(config, out_dir, dump_paths=0):
    """Execute the experiment and write all artifacts at the end."""
    started = time.time()
    files = _RUNNERS[config.experiment](config, dump_paths)
    files[f"plot_{config.experiment}.py"] = _PLOT_SCRIPTS[config.experiment]
    rendered = render_config(config)
    manifest = {
        "experiment": config.experiment,
        "seed": config.seed,
        "config_sha256": hashlib.sha256(rendered.encode()).hexdigest(),
        "config": rendered,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "elastic_jump": __version__,
        },
        "wall_time_s": round(time.time() - started, 3),
        "outputs": {
            name: hashlib.sha256(text.encode()).hexdigest()
            for name, text in sorted(files.items())
        },
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(files.items()):
        (out / name).write_text(text, encoding="utf-8", newline="")
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return sorted(files) + ["manifest.json"]


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="elastic-jump",
        description="run and validate restart-process experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config", help="path to a key = value config file")
    run_p.add_argument("--out", help="output directory (overrides the config)")
    run_p.add_argument("--seed", type=int, help="seed override")
    run_p.add_argument(
        "--dump-paths",
        type=int,
        default=0,
        metavar="N",
        help="also write the first N full paths (simulate / trace)",
    )
    val_p = sub.add_parser("validate", help="parse a config and echo it resolved")
    val_p.add_argument("config")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as e:
        print(f"config: {e}", file=sys.stderr)
        return 2
    try:
        config = parse_config(text)
    except ValidationErrors as e:
        for key, msg in e.errors:
            print(f"{key}: {msg}", file=sys.stderr)
        return 2

    if args.command == "validate":
        sys.stdout.write(render_config(config))
        return 0

    if args.seed is not None:
        if args.seed < 0:
            print("seed: must be nonnegative", file=sys.stderr)
            return 2
        config = config.replaced(seed=args.seed)
    out_dir = args.out if args.out is not None else config.out
    try:
        written = run_experiment(config, out_dir, args.dump_paths)
    except GATE_EXCEPTIONS as e:
        print(f"numerical gate {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    for name in written:
        print(Path(out_dir) / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
