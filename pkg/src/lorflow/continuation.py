"""Barrier validation and the eps -> 0 continuation of the regularized problem."""

from dataclasses import dataclass, field, replace
import logging
import time

import numpy as np

from .errors import BarrierInvalid, StepCollapse
from .flow import FlowConfig, prescribed_root, run_flow
from .graphgeo import GraphState, build_cache
from .symcone import h2_value

log = logging.getLogger(__name__)

# margins below this pass, but only with a warning
MARGIN_WARN = 1e-10


@dataclass
class BarrierPair:
    """Lower and upper barrier fields ``u1 <= u2`` on a grid."""

    grid: object
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        self.u1 = np.broadcast_to(np.asarray(self.u1, dtype=float), (self.grid.size,)).copy()
        self.u2 = np.broadcast_to(np.asarray(self.u2, dtype=float), (self.grid.size,)).copy()

    @property
    def ordered(self):
        return bool(np.all(self.u1 <= self.u2))

    def states(self):
        return GraphState(self.grid, self.u1), GraphState(self.grid, self.u2)


@dataclass
class BarrierReport:
    passed: bool
    ordered: bool
    eps: tuple
    upper_admissible: bool = False
    upper_margin: float = float("nan")      # min (F_eps - f~) on the upper graph
    upper_margin_h2: float = float("nan")   # min (H2(k~) - f) on the upper graph
    lower_margin: float = float("nan")      # max (F_eps - f~) on the admissible part of the lower graph
    lower_margin_h2: float = float("nan")
    lower_admissible_fraction: float = 0.0
    messages: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def _barrier_side(state, spec, f, eps, cutoff):
    cache = build_cache(state, spec, eps)
    ok = (cache.H_reg > 0) & (cache.H2_reg > 0)
    root = prescribed_root(state, spec, f, cache, cutoff)
    return ok, cache.F - root, cache.H2_reg - root**2


def validate_barriers(pair, spec, f, eps, cutoff=None):
    """Check the barrier conditions for every value in ``eps`` (scalar or sequence).

    The upper graph must be admissible with F_eps >= f~ everywhere; the lower
    graph must satisfy F_eps <= f~ wherever it is admissible (possibly
    nowhere).  Non-strict inequalities pass with a warning.
    """
    eps_values = tuple(np.atleast_1d(np.asarray(eps, dtype=float)).tolist())
    rep = BarrierReport(False, pair.ordered, eps_values)
    if not rep.ordered:
        rep.messages.append("lower barrier lies above the upper barrier somewhere (need u1 <= u2)")
        return rep
    lower, upper = pair.states()
    passed = True
    up_m, up_h2, lo_m, lo_h2, frac = [], [], [], [], []
    upper_adm = True
    for e in eps_values:
        ok, res, res_h2 = _barrier_side(upper, spec, f, e, cutoff)
        if not ok.all():
            upper_adm = False
            passed = False
            rep.messages.append(f"upper barrier is not admissible at eps={e:g}")
        up_m.append(res.min())
        up_h2.append(res_h2.min())
        ok, res, res_h2 = _barrier_side(lower, spec, f, e, cutoff)
        frac.append(ok.mean())
        if ok.any():
            lo_m.append(res[ok].max())
            lo_h2.append(res_h2[ok].max())
    rep.upper_admissible = upper_adm
    rep.upper_margin = float(min(up_m))
    rep.upper_margin_h2 = float(min(up_h2))
    if lo_m:
        rep.lower_margin = float(max(lo_m))
        rep.lower_margin_h2 = float(max(lo_h2))
    rep.lower_admissible_fraction = float(min(frac))
    if rep.upper_margin < -1e-12:
        passed = False
        rep.messages.append(f"upper barrier has F < f (margin {rep.upper_margin:.4g})")
    elif rep.upper_margin < MARGIN_WARN:
        rep.warnings.append("upper barrier condition holds only with equality")
    if lo_m:
        if rep.lower_margin > 1e-12:
            passed = False
            rep.messages.append(f"lower barrier has F > f on its admissible part "
                                f"(margin {rep.lower_margin:.4g})")
        elif rep.lower_margin > -MARGIN_WARN:
            rep.warnings.append("lower barrier condition holds only with equality")
    for w in rep.warnings:
        log.warning("barrier check: %s", w)
    rep.passed = passed
    return rep


@dataclass(frozen=True)
class ContinuationSchedule:
    eps0: float = 0.1
    rho: float = 0.3
    eps_min: float = 1e-3

    def __post_init__(self):
        if not (self.eps0 > 0 and self.eps_min > 0):
            raise ValueError("eps0 and eps_min must be positive")
        if self.eps_min > self.eps0:
            raise ValueError("eps_min must not exceed eps0")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")

    def values(self):
        """eps0 * rho^j, clamped to eps_min at the end; strictly decreasing."""
        out = [self.eps0]
        while out[-1] > self.eps_min * (1 + 1e-12):
            nxt = out[-1] * self.rho
            if nxt < self.eps_min * (1 + 1e-12):
                nxt = self.eps_min
            out.append(nxt)
        return out


@dataclass
class StageRecord:
    eps: float
    converged: bool
    steps: int
    rejects: int
    res_sup: float
    vt_max: float
    marginH: float
    marginH2: float
    seconds: float


@dataclass
class SolveReport:
    stages: list
    state: GraphState
    final_residual: float       # sup |H2(kappa) - f(x, nu)| with eps = 0
    residual_field: np.ndarray
    wall_time: float
    uniform_tilt: bool          # max vt of every stage <= 2x the first stage's
    barrier: BarrierReport
    traces: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    states: list = None         # per stage, (t, dt, u) of every accepted state, when recorded

    @property
    def converged(self):
        return bool(self.stages) and all(s.converged for s in self.stages)

    def summary_lines(self):
        u = self.state.u
        lines = [
            f"stages: {len(self.stages)}",
            f"converged: {self.converged}",
            f"u range: [{u.min():.10g}, {u.max():.10g}]",
            f"final unregularized residual sup|H2 - f|: {self.final_residual:.6e}",
            f"uniform tilt bound: {self.uniform_tilt}",
            f"monitor violations: {len(self.violations)}",
            f"wall time: {self.wall_time:.2f} s",
        ]
        for s in self.stages:
            lines.append(f"  eps={s.eps:.6g} converged={s.converged} steps={s.steps} "
                         f"res={s.res_sup:.3e} vt_max={s.vt_max:.6f}")
        return lines


def unregularized_residual(state, spec, f):
    """H2(kappa) - f(x, nu) on the grid, with the true tilt factor."""
    cache = build_cache(state, spec, 0.0)
    fx = f(state.u, list(state.grid.coords), cache.vt)
    return h2_value(cache.kappa) - fx


def solve(spec, f, pair, schedule=None, flow=None, on_stage=None, warm_start=False,
          record_states=False):
    """Run the regularized flow for each eps of the schedule.

    Every stage starts from the upper barrier, so each flow moves downward.
    With ``warm_start`` later stages start from the previous stage's result
    instead; since the eps-solutions rise as eps shrinks, those stages move
    upward.  A :class:`StepCollapse` is re-raised with the partial report
    attached as ``exc.report``.  ``record_states`` keeps every accepted
    state of every stage in ``report.states``.
    """
    schedule = schedule or ContinuationSchedule()
    flow = flow or FlowConfig()
    eps_values = schedule.values()
    t_start = time.perf_counter()
    barrier = validate_barriers(pair, spec, f, eps_values, flow.cutoff)
    if not barrier.passed:
        raise BarrierInvalid("; ".join(barrier.messages) or "barrier check failed")

    state = GraphState(pair.grid, pair.u2)
    stages, traces, violations = [], [], []
    recorded = [] if record_states else None
    vt_ref = None
    for eps in eps_values:
        if not warm_start:
            state = GraphState(pair.grid, pair.u2)
        cfg = replace(flow, eps=eps)
        t0 = time.perf_counter()
        try:
            res = run_flow(state, spec, f, cfg, barriers=(pair.u1, pair.u2),
                           record_states=record_states)
        except StepCollapse as exc:
            trace = exc.trace
            stages.append(StageRecord(eps, False, max(len(trace) - 1, 0) if trace else 0,
                                      trace.total_rejects if trace else 0, float("nan"),
                                      float("nan"), float("nan"), float("nan"),
                                      time.perf_counter() - t0))
            final = exc.state if exc.state is not None else state
            exc.report = _finish(stages, final, spec, f, t_start, False, barrier,
                                 traces + ([trace] if trace else []), violations)
            raise
        tr = res.trace
        vt_run = float(tr.column("vt_max").max())
        vt_ref = vt_run if vt_ref is None else vt_ref
        stages.append(StageRecord(eps, res.converged, res.steps, tr.total_rejects,
                                  res.evaluation.sup, vt_run, res.evaluation.cache.marginH,
                                  res.evaluation.cache.marginH2, time.perf_counter() - t0))
        traces.append(tr)
        if record_states:
            recorded.append(res.states)
        violations.extend(f"eps={eps:g} {v}" for v in tr.violations)
        if on_stage is not None:
            on_stage(stages[-1], tr)
        state = res.state
    uniform = all(s.vt_max <= 2.0 * vt_ref for s in stages)
    if not uniform:
        log.warning("max vt grew beyond twice its first-stage value across eps")
    return _finish(stages, state, spec, f, t_start, uniform, barrier, traces, violations, recorded)


def _finish(stages, state, spec, f, t_start, uniform, barrier, traces, violations, recorded=None):
    field_ = unregularized_residual(state, spec, f)
    return SolveReport(stages, state, float(np.abs(field_).max()), field_,
                       time.perf_counter() - t_start, uniform, barrier, traces, violations, recorded)
