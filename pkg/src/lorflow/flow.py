"""Scalar curvature flow  du/dt = -e^{-psi} v (F_eps - f~)  with adaptive steps.

``F_eps`` is sqrt H2 of the regularized spectrum and ``f~`` is the square
root of the prescribed function evaluated at the cut-off normal, whose tilt
factor is ``theta(vt)``.  Steps are explicit Euler with a rejection-based
controller; monitors log (but do not raise on) violations of the quantities
the continuous flow preserves.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from . import kernels
from .errors import EvalError, NotAdmissible, NotSpacelike, OutOfDomain, StepCollapse
from .expr import Expression
from .graphgeo import GraphState, admissibility, build_cache

log = logging.getLogger(__name__)

# monitor violations logged individually per run; the rest are only counted
MAX_LOGGED = 5

TRACE_COLUMNS = ("step", "t", "dt", "res_sup", "res_min", "vt_max", "u_min", "u_max",
                 "marginH", "marginH2", "rejects")


class CutoffSpec:
    """C^1 monotone cut-off: theta(t) = t up to k, 2k from 2k on, cubic between."""

    def __init__(self, k=10.0):
        if not k > 1:
            raise ValueError("cut-off threshold k must exceed 1")
        self.k = float(k)

    def theta(self, t):
        t = np.asarray(t, dtype=float)
        k = self.k
        s = np.clip((t - k) / k, 0.0, 1.0)
        mid = k + k * (-s**3 + s**2 + s)
        return np.where(t <= k, t, np.where(t >= 2 * k, 2 * k, mid))

    def dtheta(self, t):
        t = np.asarray(t, dtype=float)
        k = self.k
        s = np.clip((t - k) / k, 0.0, 1.0)
        return np.where(t <= k, 1.0, np.where(t >= 2 * k, 0.0, (1 - s) * (3 * s + 1)))

    def __repr__(self):
        return f"CutoffSpec(k={self.k:g})"


class PrescribedF:
    """Right-hand side f(x0, x, vt) > 0 with declared constants.

    ``c1`` is the claimed positive lower bound; ``c2`` and ``c3`` are kept as
    metadata only.
    """

    def __init__(self, expression, c1=None, c2=None, c3=None):
        self.expression = expression if isinstance(expression, Expression) else Expression(expression)
        self.c1, self.c2, self.c3 = c1, c2, c3
        if c1 is not None and not c1 > 0:
            raise ValueError("c1 must be positive")

    def __call__(self, x0, xs, vt):
        env = {"x0": x0, "vt": vt}
        for i, x in enumerate(xs):
            env[f"x{i + 1}"] = x
        shape = np.broadcast(np.asarray(x0), np.asarray(vt), *[np.asarray(x) for x in xs]).shape
        return np.broadcast_to(np.asarray(self.expression(**env), dtype=float), shape)

    @property
    def depends_on_normal(self):
        return "vt" in self.expression.names

    def sample_minimum(self, spec, vt_max=2.0, samples=4096, seed=0):
        """Smallest sampled value over the domain and tilts vt in [1, vt_max]."""
        rng = np.random.default_rng(seed)
        a, b = spec.time_interval
        x0 = rng.uniform(a, b, samples)
        xs = [rng.uniform(0.0, spec.period, samples) for _ in range(spec.n)]
        vt = rng.uniform(1.0, vt_max, samples)
        return float(np.min(self(x0, xs, vt)))

    def __repr__(self):
        return f"PrescribedF({self.expression.text!r})"


@dataclass
class FlowConfig:
    eps: float = 0.1
    tol_flow: float = 1e-6
    dt_init: float = 1e-3
    dt_safety: float = 0.5
    dt_growth: float = 1.5
    max_steps: int = 20000
    cutoff: CutoffSpec = field(default_factory=CutoffSpec)
    min_dt: float = 1e-12
    growth_after: int = 10
    residual_growth: float = 1.5
    adaptive: bool = True

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        for name in ("tol_flow", "dt_init", "dt_safety", "min_dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.dt_safety < 1:
            raise ValueError("dt_safety must be < 1")
        if not self.dt_growth >= 1:
            raise ValueError("dt_growth must be >= 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")


@dataclass
class FlowTrace:
    """Append-only telemetry; one row per accepted step (row 0 is the start)."""

    rows: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    total_rejects: int = 0

    def append(self, **row):
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            raise ValueError("trace time must increase strictly")
        self.rows.append({c: row[c] for c in TRACE_COLUMNS})

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def __len__(self):
        return len(self.rows)


@dataclass
class Evaluation:
    """Velocity, residual and geometry of one state."""

    state: GraphState
    cache: object
    velocity: np.ndarray
    residual: np.ndarray  # F_eps - f~

    @property
    def sup(self):
        return float(np.abs(self.residual).max())


def prescribed_root(state, spec, f, cache, cutoff):
    """sqrt f(x, nu~) on the grid, with vt replaced by theta(vt)."""
    vt = cutoff.theta(cache.vt) if cutoff is not None else cache.vt
    fx = f(state.u, list(state.grid.coords), vt)
    if np.any(~np.isfinite(fx)) or np.any(fx <= 0):
        raise EvalError("prescribed f must be finite and positive on the graph")
    return np.sqrt(fx)


def evaluate(state, spec, f, cfg):
    cache = build_cache(state, spec, cfg.eps)
    adm = admissibility(cache)
    if not adm.admissible:
        raise NotAdmissible(
            f"regularized curvatures leave Gamma_2 (min H = {adm.marginH:.3g}, "
            f"min H2 = {adm.marginH2:.3g})")
    res = cache.F - prescribed_root(state, spec, f, cache, cfg.cutoff)
    vel = -np.exp(-cache.psi) * cache.v * res
    return Evaluation(state, cache, vel, res)


def velocity_field(state, spec, f, cfg):
    """-e^{-psi} v (F_eps - f~) at every grid point."""
    return evaluate(state, spec, f, cfg).velocity


@dataclass
class Controller:
    """Mutable step-size state owned by one flow run."""

    dt: float
    mode: str = "descending"  # which side of zero the residual is kept on
    t: float = 0.0
    streak: int = 0
    rejects: int = 0  # since the last accepted step


@dataclass
class StepResult:
    accepted: bool
    evaluation: Evaluation
    dt: float
    reason: str = ""


def flow_mode(residual, tol):
    if residual.min() >= -tol:
        return "descending"
    if residual.max() <= tol:
        return "ascending"
    return "mixed"


def step(current, spec, f, cfg, ctrl):
    """One attempted explicit step from ``current`` (an :class:`Evaluation`).

    Accepted steps advance ``ctrl.t``; rejections halve ``ctrl.dt`` and raise
    :class:`StepCollapse` once it drops below ``cfg.min_dt``.
    """
    vel = current.velocity
    dt = ctrl.dt
    if cfg.adaptive:
        vmax = float(np.abs(vel).max())
        if vmax > 0:
            dt = min(dt, cfg.dt_safety * current.state.grid.dx / vmax)
    new_u = current.state.u + dt * vel
    reason = ""
    try:
        nxt = evaluate(current.state.with_u(new_u), spec, f, cfg)
    except NotSpacelike:
        reason = "not space-like"
    except OutOfDomain:
        reason = "left the time interval"
    except NotAdmissible:
        reason = "lost admissibility"
    except EvalError as exc:
        reason = str(exc)
    if not reason:
        if nxt.sup > cfg.residual_growth * current.sup and nxt.sup > cfg.tol_flow:
            reason = "residual grew"
        elif ctrl.mode == "descending" and nxt.residual.min() < -cfg.tol_flow:
            reason = "residual changed sign"
        elif ctrl.mode == "ascending" and nxt.residual.max() > cfg.tol_flow:
            reason = "residual changed sign"
    if reason:
        ctrl.rejects += 1
        ctrl.streak = 0
        ctrl.dt = dt / 2.0
        if ctrl.dt < cfg.min_dt:
            raise StepCollapse(f"step size fell below {cfg.min_dt:g} ({reason})")
        return StepResult(False, current, dt, reason)
    ctrl.t += dt
    if cfg.adaptive:
        ctrl.dt = dt
        ctrl.streak += 1
        if ctrl.streak >= cfg.growth_after:
            ctrl.dt = dt * cfg.dt_growth
            ctrl.streak = 0
    return StepResult(True, nxt, dt)


@dataclass
class FlowResult:
    state: GraphState
    trace: FlowTrace
    converged: bool
    evaluation: Evaluation
    states: list = None  # (t, dt, u) of every accepted state when recorded

    @property
    def steps(self):
        return len(self.trace) - 1


def _row(trace, k, t, dt, ev, rejects):
    adm = ev.cache
    trace.append(step=k, t=t, dt=dt, res_sup=ev.sup, res_min=float(ev.residual.min()),
                 vt_max=float(ev.cache.vt.max()), u_min=float(ev.state.u.min()),
                 u_max=float(ev.state.u.max()), marginH=adm.marginH, marginH2=adm.marginH2,
                 rejects=rejects)


def run_flow(initial, spec, f, cfg, barriers=None, record_states=False):
    """Step until sup|F_eps - f~| <= tol_flow or ``max_steps`` accepted steps.

    The residual's sign at the start fixes the direction of the run: a start
    with F_eps >= f~ (upper barrier) flows downward and is kept on that side,
    the mirror case flows upward.  ``barriers`` is an optional ``(u1, u2)``
    pair of grid fields used by the containment monitor.
    """
    if not isinstance(initial, GraphState):
        raise TypeError("initial must be a GraphState")
    ev = evaluate(initial, spec, f, cfg)
    trace = FlowTrace()
    ctrl = Controller(cfg.dt_init, flow_mode(ev.residual, cfg.tol_flow))
    _row(trace, 0, 0.0, 0.0, ev, 0)
    vt0 = float(ev.cache.vt.max())
    states = [(0.0, 0.0, ev.state.u)] if record_states else None
    if ctrl.mode == "mixed":
        log.info("initial residual has both signs; monotonicity is not monitored")

    accepted = 0
    while ev.sup > cfg.tol_flow and accepted < cfg.max_steps:
        try:
            res = step(ev, spec, f, cfg, ctrl)
        except StepCollapse as exc:
            trace.total_rejects += ctrl.rejects
            exc.trace = trace
            exc.state = ev.state
            raise
        if not res.accepted:
            continue
        accepted += 1
        prev, ev = ev, res.evaluation
        _monitor(trace, accepted, prev, ev, ctrl.mode, cfg, vt0, barriers)
        _row(trace, accepted, ctrl.t, res.dt, ev, ctrl.rejects)
        trace.total_rejects += ctrl.rejects
        ctrl.rejects = 0
        if record_states:
            states.append((ctrl.t, res.dt, ev.state.u))
    if len(trace.violations) > MAX_LOGGED:
        log.warning("flow monitor: %d violations in total (only the first %d were logged)",
                    len(trace.violations), MAX_LOGGED)
    converged = ev.sup <= cfg.tol_flow
    return FlowResult(ev.state, trace, converged, ev, states)


def _monitor(trace, k, prev, ev, mode, cfg, vt0, barriers):
    bad = trace.violations
    logged = min(len(bad), MAX_LOGGED)
    du = ev.state.u - prev.state.u
    if mode == "descending":
        if du.max() > 1e-12:
            bad.append(f"step {k}: u increased by {du.max():.3g}")
        if ev.residual.min() < -cfg.tol_flow:
            bad.append(f"step {k}: min(F - f) = {ev.residual.min():.3g}")
    elif mode == "ascending":
        if du.min() < -1e-12:
            bad.append(f"step {k}: u decreased by {-du.min():.3g}")
        if ev.residual.max() > cfg.tol_flow:
            bad.append(f"step {k}: max(F - f) = {ev.residual.max():.3g}")
    if barriers is not None:
        u1, u2 = barriers
        if np.any(ev.state.u < u1 - 1e-8) or np.any(ev.state.u > u2 + 1e-8):
            bad.append(f"step {k}: graph left the barrier region")
    if ev.cache.vt.max() > vt0 + 0.5:
        bad.append(f"step {k}: max vt = {ev.cache.vt.max():.4g} exceeds start + 0.5")
    if logged < MAX_LOGGED:
        for line in bad[logged:MAX_LOGGED]:
            log.warning("flow monitor: %s", line)


# --------------------------------------------------------------------------
# metric evolution consistency


@dataclass
class MetricEvolutionReport:
    mismatches: np.ndarray  # relative mismatch per step pair
    max_mismatch: float


def metric_evolution_diagnostic(states, grid, spec, f, cfg, include_tangential=True):
    """Compare difference quotients of g with 2 (F - f) h + L_T g.

    ``states`` is a sequence of ``(t, dt, u)`` as recorded by
    :func:`run_flow`.  In the graph parametrization the motion splits into a
    normal part, which produces 2 (F - f) h, and a tangential drift
    T^k = e^{-psi} vt (F - f) sigma^{kl} u_l whose Lie derivative is added
    unless ``include_tangential`` is false.  Both sides are taken at the
    mid state, so the mismatch is first order in dt.
    """
    out = []
    for (_, _, ua), (_, dt, ub) in zip(states[:-1], states[1:]):
        ga = build_cache(GraphState(grid, ua), spec, cfg.eps).g
        gb = build_cache(GraphState(grid, ub), spec, cfg.eps).g
        lhs = (gb - ga) / dt
        mid = evaluate(GraphState(grid, 0.5 * (ua + ub)), spec, f, cfg)
        c = mid.cache
        rhs = 2.0 * mid.residual * c.h
        if include_tangential:
            rhs = rhs + _lie_drift(c, spec, grid, mid.residual)
        scale = max(float(np.abs(lhs).max()), float(np.abs(rhs).max()))
        out.append(0.0 if scale == 0.0 else float(np.abs(lhs - rhs).max()) / scale)
    out = np.array(out)
    return MetricEvolutionReport(out, float(out.max()) if out.size else 0.0)


def _lie_drift(cache, spec, grid, residual):
    n, P = grid.n, grid.size
    T = np.exp(-cache.psi) * cache.vt * residual * np.einsum("kl,lp->kp", spec.sigma_inv, cache.Du)
    dg = kernels.gradient(cache.g.reshape(n * n, P), grid.neighbours, grid.dx).reshape(n, n, n, P)
    dT = kernels.gradient(T, grid.neighbours, grid.dx)  # [i, k] = d_i T^k
    return (np.einsum("kp,kijp->ijp", T, dg)
            + np.einsum("kjp,ikp->ijp", cache.g, dT)
            + np.einsum("ikp,jkp->ijp", cache.g, dT))
