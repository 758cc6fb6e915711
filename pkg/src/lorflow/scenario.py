"""Scenario files, grid dumps, CSV tables and heatmaps.

Scenario files are INI-style (``configparser``) with the sections below.
Every key is listed in :data:`SCHEMA`; unknown sections or keys are
rejected.  Expressions use the mini-language of :mod:`lorflow.expr`.

::

    [spacetime]
    family = power_law        ; power_law | perturbed_power_law | minkowski | expression
    beta = 2
    time_interval = 0.8, 1.2
    [grid]
    n = 2
    points = 64
    [problem]
    f = 4
    [barriers]
    u1 = 0.8
    u2 = 1.2
    [solver]
    eps0 = 0.1
"""

from configparser import ConfigParser, Error as IniError
from dataclasses import dataclass, replace
import csv
import io
import re
from pathlib import Path

import numpy as np

from .ambient import ConvexCandidate, SpacetimeSpec
from .continuation import BarrierPair, ContinuationSchedule
from .errors import BarrierInvalid, ConfigError, EvalError, ParseError, RangeError, SchemaError
from .expr import Expression
from .flow import TRACE_COLUMNS, CutoffSpec, FlowConfig, PrescribedF
from .graphgeo import TorusGrid

FAMILIES = ("power_law", "perturbed_power_law", "minkowski", "expression")


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _pair(text):
    vals = _floats(text)
    if len(vals) != 2:
        raise ValueError("expected two numbers")
    return tuple(vals)


def _flag(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


# section -> key -> (converter, default); a default of ``REQUIRED`` must be given
REQUIRED = object()
SCHEMA = {
    "spacetime": {
        "family": (str, REQUIRED),
        "beta": (float, None),
        "amplitude": (float, 0.0),
        "psi": (str, None),
        "sigma": (_floats, None),
        "time_interval": (_pair, REQUIRED),
    },
    "grid": {
        "n": (int, REQUIRED),
        "points": (int, REQUIRED),
        "period": (float, 1.0),
    },
    "problem": {
        "f": (str, REQUIRED),
        "c1": (float, None),
        "c2": (float, None),
        "c3": (float, None),
        "cutoff_k": (float, 10.0),
    },
    "barriers": {
        "u1": (str, REQUIRED),
        "u2": (str, REQUIRED),
    },
    "solver": {
        "eps0": (float, 0.1),
        "rho": (float, 0.3),
        "eps_min": (float, 1e-3),
        "tol_flow": (float, 1e-6),
        "dt_init": (float, 1e-3),
        "dt_safety": (float, 0.5),
        "dt_growth": (float, 1.5),
        "min_dt": (float, 1e-12),
        "max_steps": (int, 20000),
        "seed": (int, 0),
        "warm_start": (_flag, False),
    },
    "convexity": {
        "chi": (str, REQUIRED),
        "c0": (float, REQUIRED),
        "samples": (int, 200),
    },
}
OPTIONAL_SECTIONS = {"convexity"}


@dataclass
class ScenarioConfig:
    source: str
    values: dict          # section -> key -> converted value
    spec: SpacetimeSpec
    grid: TorusGrid
    f: PrescribedF
    u1: Expression
    u2: Expression
    schedule: ContinuationSchedule
    flow: FlowConfig
    seed: int
    convexity: ConvexCandidate = None
    convexity_samples: int = 200
    warm_start: bool = False

    def barriers(self):
        return BarrierPair(self.grid, _grid_field(self.u1, self.grid), _grid_field(self.u2, self.grid))

    def with_overrides(self, eps=None, points=None, max_steps=None, seed=None):
        """Copy with command-line overrides applied (``eps`` replaces eps_min)."""
        out = replace(self)
        if points is not None:
            if points < 8:
                raise RangeError("grid points must be >= 8")
            out.grid = TorusGrid(self.grid.n, points, self.grid.period)
        if eps is not None:
            if not eps > 0:
                raise RangeError("eps must be positive")
            out.schedule = ContinuationSchedule(max(self.schedule.eps0, eps), self.schedule.rho, eps)
        if max_steps is not None:
            if max_steps < 0:
                raise RangeError("max_steps must be >= 0")
            out.flow = replace(out.flow, max_steps=max_steps)
        if seed is not None:
            out.seed = seed
        return out


def _grid_field(expr, grid):
    env = {f"x{i + 1}": grid.coords[i] for i in range(grid.n)}
    try:
        vals = np.asarray(expr(**env), dtype=float)
    except EvalError as exc:
        raise RangeError(f"barrier {expr.text!r} cannot be evaluated: {exc}") from None
    return np.broadcast_to(vals, (grid.size,)).copy()


def _expression(values, section, key, allowed):
    text = values[section][key]
    try:
        expr = Expression(text)
    except ParseError as exc:
        exc.args = (f"[{section}] {key}: {exc.args[0]}",)
        raise
    bad = sorted(expr.names - set(allowed))
    if bad:
        raise SchemaError(f"[{section}] {key} may not use {', '.join(bad)} "
                          f"(allowed: {', '.join(allowed) or 'constants only'})")
    return expr


def _read_sections(text, source):
    parser = ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except IniError as exc:
        raise SchemaError(f"{source}: malformed scenario file: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise SchemaError(f"unknown section [{section}]")
        keys = SCHEMA[section]
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in keys:
                raise SchemaError(f"unknown key {key!r} in section [{section}]")
            conv = keys[key][0]
            try:
                values[section][key] = conv(raw.strip())
            except ValueError:
                raise RangeError(f"[{section}] {key}: cannot read {raw.strip()!r}") from None
    for section, keys in SCHEMA.items():
        if section not in values:
            if section in OPTIONAL_SECTIONS:
                continue
            raise SchemaError(f"missing section [{section}]")
        for key, (_, default) in keys.items():
            if key not in values[section]:
                if default is REQUIRED:
                    raise SchemaError(f"missing key {key!r} in section [{section}]")
                values[section][key] = default
    return values


def _check(cond, message):
    if not cond:
        raise RangeError(message)


def parse_scenario(text, source="<string>", check_barriers=True):
    """Validate scenario text and build the solver objects."""
    v = _read_sections(text, source)
    st, gr, pr, sv = v["spacetime"], v["grid"], v["problem"], v["solver"]

    _check(gr["n"] in (2, 3), "grid n must be 2 or 3")
    _check(gr["points"] >= 8, "grid points must be >= 8")
    _check(gr["period"] > 0, "grid period must be positive")
    n = gr["n"]
    a, b = st["time_interval"]
    _check(a < b, "time_interval needs a < b")
    sigma = st["sigma"]
    if sigma is not None:
        _check(len(sigma) == n, f"sigma needs {n} diagonal entries")
        _check(all(s > 0 for s in sigma), "sigma entries must be positive")
    family = st["family"]
    if family not in FAMILIES:
        raise SchemaError(f"unknown spacetime family {family!r}; expected one of {', '.join(FAMILIES)}")
    kw = dict(n=n, sigma=sigma, time_interval=(a, b), period=gr["period"])
    space_vars = tuple(f"x{i}" for i in range(n + 1))
    if family in ("power_law", "perturbed_power_law"):
        if st["beta"] is None:
            raise SchemaError(f"family {family} needs key 'beta'")
        _check(st["beta"] > 0, "beta must be positive")
        _check(a > 0, "power-law families need a positive time interval")
        if family == "power_law":
            spec = SpacetimeSpec.power_law(st["beta"], **kw)
        else:
            spec = SpacetimeSpec.perturbed_power_law(st["beta"], st["amplitude"], **kw)
    elif family == "minkowski":
        spec = SpacetimeSpec.minkowski(**kw)
    else:
        if st["psi"] is None:
            raise SchemaError("family expression needs key 'psi'")
        spec = SpacetimeSpec.from_expression(_expression(v, "spacetime", "psi", space_vars), **kw)
        try:
            spec.validate()
        except (ValueError, EvalError) as exc:
            raise RangeError(f"psi: {exc}") from None

    grid = TorusGrid(n, gr["points"], gr["period"])

    _check(pr["cutoff_k"] > 1, "cutoff_k must exceed 1")
    for c in ("c1", "c2", "c3"):
        _check(pr[c] is None or pr[c] > 0, f"{c} must be positive")
    f = PrescribedF(_expression(v, "problem", "f", space_vars + ("vt",)), pr["c1"], pr["c2"], pr["c3"])
    try:
        fmin = f.sample_minimum(spec, vt_max=2 * pr["cutoff_k"], seed=sv["seed"])
    except EvalError as exc:
        raise RangeError(f"f cannot be evaluated on the domain: {exc}") from None
    bound = pr["c1"] if pr["c1"] is not None else 0.0
    _check(fmin > 0 and fmin >= bound, f"f must satisfy f >= c1 > 0 (sampled minimum {fmin:.6g})")

    _check(sv["eps0"] > 0 and sv["eps_min"] > 0, "eps0 and eps_min must be positive")
    _check(sv["eps_min"] <= sv["eps0"], "eps_min must not exceed eps0")
    _check(0 < sv["rho"] < 1, "rho must lie in (0, 1)")
    for key in ("tol_flow", "dt_init", "min_dt"):
        _check(sv[key] > 0, f"{key} must be positive")
    _check(0 < sv["dt_safety"] < 1, "dt_safety must lie in (0, 1)")
    _check(sv["dt_growth"] >= 1, "dt_growth must be >= 1")
    _check(sv["max_steps"] >= 0, "max_steps must be >= 0")
    schedule = ContinuationSchedule(sv["eps0"], sv["rho"], sv["eps_min"])
    flow = FlowConfig(eps=sv["eps0"], tol_flow=sv["tol_flow"], dt_init=sv["dt_init"],
                      dt_safety=sv["dt_safety"], dt_growth=sv["dt_growth"],
                      max_steps=sv["max_steps"], cutoff=CutoffSpec(pr["cutoff_k"]),
                      min_dt=sv["min_dt"])

    bar_vars = space_vars[1:]
    u1 = _expression(v, "barriers", "u1", bar_vars)
    u2 = _expression(v, "barriers", "u2", bar_vars)

    convexity, samples = None, 200
    if "convexity" in v:
        cv = v["convexity"]
        _check(cv["c0"] > 0, "c0 must be positive")
        _check(cv["samples"] >= 1, "samples must be >= 1")
        convexity = ConvexCandidate(_expression(v, "convexity", "chi", space_vars), cv["c0"])
        samples = cv["samples"]

    cfg = ScenarioConfig(source, v, spec, grid, f, u1, u2, schedule, flow, sv["seed"],
                         convexity, samples, sv["warm_start"])
    if check_barriers:
        pair = cfg.barriers()
        if not pair.ordered:
            raise BarrierInvalid("barriers are swapped: u1 > u2 somewhere on the grid")
        for name, fld in (("u1", pair.u1), ("u2", pair.u2)):
            if fld.min() < a or fld.max() > b:
                raise RangeError(f"barrier {name} leaves the time interval [{a:g}, {b:g}]")
    return cfg


def load_scenario(path, check_barriers=True):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text, str(path), check_barriers)


# --------------------------------------------------------------------------
# LORGRID v1 dumps

GRID_MAGIC = "LORGRID v1"


def format_grid(grid, u, time_interval):
    """LORGRID v1 text: one header line, then rows along the last axis."""
    a, b = time_interval
    dims = "x".join(str(d) for d in grid.shape)
    head = f"{GRID_MAGIC} n={grid.n} dims={dims} L={grid.period:.17g} interval={a:.17g},{b:.17g}"
    rows = np.asarray(u, dtype=float).reshape(-1, grid.points)
    body = "\n".join(" ".join(f"{x:.17g}" for x in row) for row in rows)
    return head + "\n" + body + "\n"


def write_grid(path, grid, u, time_interval):
    Path(path).write_text(format_grid(grid, u, time_interval), encoding="ascii")


def parse_grid(text):
    """Inverse of :func:`format_grid`; returns ``(grid, u, time_interval)``."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith(GRID_MAGIC + " "):
        raise SchemaError("not a LORGRID v1 file")
    fields = dict(item.split("=", 1) for item in lines[0][len(GRID_MAGIC):].split())
    try:
        n = int(fields["n"])
        dims = [int(d) for d in fields["dims"].split("x")]
        period = float(fields["L"])
        interval = _pair(fields["interval"])
    except (KeyError, ValueError):
        raise SchemaError("malformed LORGRID header") from None
    if len(dims) != n or len(set(dims)) != 1:
        raise SchemaError("LORGRID dims must list n equal sizes")
    grid = TorusGrid(n, dims[0], period)
    rows = [ln for ln in lines[1:] if ln.strip()]
    if len(rows) != grid.size // grid.points:
        raise SchemaError(f"LORGRID expects {grid.size // grid.points} rows, found {len(rows)}")
    try:
        vals = np.array([[float(x) for x in ln.split()] for ln in rows])
    except ValueError:
        raise SchemaError("LORGRID body contains a non-number") from None
    if vals.shape != (grid.size // grid.points, grid.points):
        raise SchemaError("LORGRID rows have the wrong length")
    return grid, vals.ravel(), interval


def read_grid(path):
    return parse_grid(Path(path).read_text(encoding="ascii"))


# --------------------------------------------------------------------------
# tables

STAGE_COLUMNS = ("eps", "converged", "steps", "rejects", "res_sup", "vt_max", "marginH", "marginH2")


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def trace_csv(trace):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for row in trace.rows:
        w.writerow([_cell(row[c]) for c in TRACE_COLUMNS])
    return buf.getvalue()


def write_trace_csv(path, trace):
    Path(path).write_text(trace_csv(trace), encoding="ascii")


def write_stage_csv(path, stages):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STAGE_COLUMNS)
    for s in stages:
        w.writerow([_cell(getattr(s, c)) for c in STAGE_COLUMNS])
    Path(path).write_text(buf.getvalue(), encoding="ascii")


def write_axis_slices(out_dir, grid, u, stem="u"):
    """One CSV per axis: the field along that axis through the origin."""
    out_dir = Path(out_dir)
    field = np.asarray(u).reshape(grid.shape)
    paths = []
    x = np.arange(grid.points) * grid.dx
    for axis in range(grid.n):
        index = [0] * grid.n
        index[axis] = slice(None)
        path = out_dir / f"{stem}_axis{axis + 1}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{axis + 1}", stem])
            for xi, ui in zip(x, field[tuple(index)]):
                w.writerow([_cell(xi), _cell(ui)])
        paths.append(path)
    return paths


# --------------------------------------------------------------------------
# heatmaps (binary PPM)

_STOPS = np.array([[0.230, 0.299, 0.754], [0.865, 0.865, 0.865], [0.706, 0.016, 0.150]])


def colorize(values, lo=None, hi=None):
    """Map a 2-d array to RGB bytes with a blue-grey-red ramp."""
    values = np.asarray(values, dtype=float)
    lo = float(values.min()) if lo is None else lo
    hi = float(values.max()) if hi is None else hi
    s = np.zeros_like(values) if hi <= lo else np.clip((values - lo) / (hi - lo), 0, 1)
    pos = s * (len(_STOPS) - 1)
    i = np.minimum(pos.astype(int), len(_STOPS) - 2)
    frac = (pos - i)[..., None]
    rgb = _STOPS[i] * (1 - frac) + _STOPS[i + 1] * frac
    return np.round(rgb * 255).astype(np.uint8)


def write_ppm(path, values, scale=4):
    """Write a binary PPM heatmap; row 0 of the image is the largest x2."""
    img = colorize(np.asarray(values).T[::-1])
    img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_ppm(path):
    data = Path(path).read_bytes()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+255\s", data)
    if m is None:
        raise SchemaError("not an 8-bit binary PPM")
    w, h = int(m.group(1)), int(m.group(2))
    pix = np.frombuffer(data[m.end(): m.end() + w * h * 3], dtype=np.uint8)
    return pix.reshape(h, w, 3)
