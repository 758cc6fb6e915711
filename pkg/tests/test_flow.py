import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lorflow.ambient import SpacetimeSpec
from lorflow.errors import NotAdmissible, StepCollapse
from lorflow.flow import (TRACE_COLUMNS, Controller, CutoffSpec, FlowConfig, FlowTrace, PrescribedF,
                          evaluate, flow_mode, metric_evolution_diagnostic, prescribed_root,
                          run_flow, step, velocity_field)
from lorflow.graphgeo import GraphState, TorusGrid, build_cache

SPEC = SpacetimeSpec.power_law(2.0, time_interval=(0.8, 1.2))
GRID = TorusGrid(2, 16)
F4 = PrescribedF("4", c1=4)


class TestCutoff:
    def test_requires_k_above_one(self):
        with pytest.raises(ValueError):
            CutoffSpec(1.0)

    @pytest.mark.parametrize("k", [1.5, 10.0, 37.0])
    def test_invariants_on_dense_sampling(self, k):
        c = CutoffSpec(k)
        t = np.linspace(0, 4 * k, 10_000)
        th, dth = c.theta(t), c.dtheta(t)
        np.testing.assert_array_equal(th[t <= k], t[t <= k])
        np.testing.assert_array_equal(th[t >= 2 * k], 2 * k)
        assert np.all(dth >= 0) and np.all(dth <= 4)
        assert np.all(np.diff(th) >= 0)
        # derivative consistent with the values
        mid = 0.5 * (t[1:] + t[:-1])
        np.testing.assert_allclose(np.diff(th) / np.diff(t), c.dtheta(mid), atol=1e-3)

    @given(st.floats(1.01, 100), st.floats(0, 1))
    def test_c1_at_joins(self, k, s):
        c = CutoffSpec(k)
        for t0 in (k, 2 * k):
            h = 1e-7 * k
            left = (c.theta(t0) - c.theta(t0 - h)) / h
            right = (c.theta(t0 + h) - c.theta(t0)) / h
            assert left == pytest.approx(right, abs=1e-5)


class TestPrescribedF:
    def test_positive_lower_bound(self):
        with pytest.raises(ValueError):
            PrescribedF("4", c1=0)

    def test_evaluation_broadcasts(self):
        f = PrescribedF("4 * (1 + 0.1 * (vt - 1))", c1=3.9)
        out = f(np.full(3, 1.0), [np.zeros(3), np.zeros(3)], np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(out, [4.0, 4.4, 4.8])
        assert f.depends_on_normal
        assert not F4.depends_on_normal
        assert F4(1.0, [0.0, 0.0], 1.0).shape == ()

    def test_sample_minimum(self):
        f = PrescribedF("4 * (1 + 0.1 * (vt - 1))", c1=3.9)
        assert 4.0 <= f.sample_minimum(SPEC, vt_max=20) < 4.01

    def test_cutoff_replaces_tilt(self):
        f = PrescribedF("vt")
        grid = TorusGrid(2, 16)
        u = grid.sample(lambda x, y: 1.0 + 0.1 * np.sin(2 * np.pi * x))
        state = GraphState(grid, u)
        cache = build_cache(state, SPEC)
        np.testing.assert_allclose(prescribed_root(state, SPEC, f, cache, CutoffSpec(1.01)) ** 2,
                                   CutoffSpec(1.01).theta(cache.vt))
        # k >= 2 max vt: the cut-off normal is the normal
        k = 2 * cache.vt.max()
        np.testing.assert_array_equal(prescribed_root(state, SPEC, f, cache, CutoffSpec(k)),
                                      np.sqrt(cache.vt))


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(eps=-1), dict(tol_flow=0), dict(dt_safety=1.0),
                                    dict(dt_growth=0.5), dict(max_steps=-1), dict(dt_init=0)])
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValueError):
            FlowConfig(**kw)


class TestVelocity:
    def test_stationary_umbilic(self):
        vel = velocity_field(GraphState(GRID, 1.0), SPEC, F4, FlowConfig(eps=0.0))
        assert np.abs(vel).max() < 1e-14

    def test_upper_barrier_moves_down(self):
        vel = velocity_field(GraphState(GRID, 1.2), SPEC, F4, FlowConfig(eps=0.1))
        assert np.all(vel < 0)

    @pytest.mark.parametrize("eps", [0.01, 0.1, 0.5])
    def test_regularization_shift(self, eps):
        state = GraphState(GRID, 1.1)
        r0 = evaluate(state, SPEC, F4, FlowConfig(eps=0.0)).residual
        re = evaluate(state, SPEC, F4, FlowConfig(eps=eps)).residual
        k = 2.0 * 1.1
        np.testing.assert_allclose(re - r0, 2 * eps * k, rtol=1e-12)  # (1 + eps n) - 1 times sqrt H2 = k

    def test_inadmissible_raises(self):
        flat = SpacetimeSpec.minkowski(time_interval=(0.5, 1.5))
        with pytest.raises(NotAdmissible):
            velocity_field(GraphState(GRID, 1.0), flat, F4, FlowConfig(eps=0.0))


class TestStep:
    def test_first_step_decreases_everywhere(self):
        cfg = FlowConfig(eps=0.1)
        ev = evaluate(GraphState(GRID, 1.2), SPEC, F4, cfg)
        ctrl = Controller(cfg.dt_init, flow_mode(ev.residual, cfg.tol_flow))
        res = step(ev, SPEC, F4, cfg, ctrl)
        assert res.accepted
        assert np.all(res.evaluation.state.u < 1.2)

    def test_huge_dt_is_rejected_and_halved(self):
        cfg = FlowConfig(eps=0.1, dt_init=100.0, adaptive=False)
        ev = evaluate(GraphState(GRID, 1.2), SPEC, F4, cfg)
        ctrl = Controller(cfg.dt_init)
        res = step(ev, SPEC, F4, cfg, ctrl)
        assert not res.accepted
        assert ctrl.dt == 50.0 and ctrl.rejects == 1

    def test_stationary_state_grows_dt(self):
        cfg = FlowConfig(eps=0.0, growth_after=3)
        ev = evaluate(GraphState(GRID, 1.0), SPEC, F4, cfg)
        ctrl = Controller(1e-3)
        for _ in range(3):
            res = step(ev, SPEC, F4, cfg, ctrl)
            assert res.accepted
            np.testing.assert_array_equal(res.evaluation.state.u, 1.0)
            ev = res.evaluation
        assert ctrl.dt == pytest.approx(1.5e-3)

    def test_collapse(self):
        cfg = FlowConfig(eps=0.1, dt_init=100.0, adaptive=False, min_dt=60.0)
        ev = evaluate(GraphState(GRID, 1.2), SPEC, F4, cfg)
        with pytest.raises(StepCollapse):
            step(ev, SPEC, F4, cfg, Controller(cfg.dt_init))

    def test_modes(self):
        assert flow_mode(np.array([0.0, 1.0]), 1e-6) == "descending"
        assert flow_mode(np.array([-1.0, 0.0]), 1e-6) == "ascending"
        assert flow_mode(np.array([-1.0, 1.0]), 1e-6) == "mixed"


class TestRunFlow:
    def test_converges_from_upper_barrier(self):
        res = run_flow(GraphState(GRID, 1.2), SPEC, F4, FlowConfig(eps=0.1, tol_flow=1e-8),
                       barriers=(0.8, 1.2))
        assert res.converged
        # stationary point of the eps-problem: 2 c (1 + 2 eps) = 2
        np.testing.assert_allclose(res.state.u, 1 / 1.2, rtol=1e-7)
        assert not res.trace.violations
        t = res.trace.column("t")
        assert np.all(np.diff(t) > 0)
        assert list(res.trace.rows[0]) == list(TRACE_COLUMNS)

    def test_loose_tolerance_converges_in_zero_steps(self):
        res = run_flow(GraphState(GRID, 1.2), SPEC, F4, FlowConfig(eps=0.1, tol_flow=10.0))
        assert res.converged and res.steps == 0 and len(res.trace) == 1

    def test_max_steps(self):
        res = run_flow(GraphState(GRID, 1.2), SPEC, F4, FlowConfig(eps=0.1, max_steps=5))
        assert not res.converged and res.steps == 5

    def test_invalid_barrier_collapses(self):
        # f = 10 exceeds H2 = 5.76 of the top slice: the flow pushes out of the interval
        with pytest.raises(StepCollapse) as exc:
            run_flow(GraphState(GRID, 1.2), SPEC, PrescribedF("10", c1=10), FlowConfig(eps=0.1))
        assert exc.value.trace is not None and len(exc.value.trace) >= 1

    def test_deterministic(self):
        u = GRID.sample(lambda x, y: 1.1 + 0.01 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))
        cfg = FlowConfig(eps=0.1, max_steps=200)
        a = run_flow(GraphState(GRID, u), SPEC, F4, cfg).trace.rows
        b = run_flow(GraphState(GRID, u), SPEC, F4, cfg).trace.rows
        assert a == b

    def test_perturbed_start_relaxes(self):
        u = GRID.sample(lambda x, y: 1.1 + 0.01 * np.sin(2 * np.pi * x))
        res = run_flow(GraphState(GRID, u), SPEC, F4, FlowConfig(eps=0.1, max_steps=5000),
                       barriers=(0.8, 1.2))
        assert res.converged
        assert np.ptp(res.state.u) < 1e-6
        # upward drift stays far below tol_flow-sized corrections
        assert all("left the barrier" not in v for v in res.trace.violations)

    def test_append_rejects_non_increasing_time(self):
        tr = FlowTrace()
        row = {c: 0 for c in TRACE_COLUMNS}
        tr.append(**row)
        with pytest.raises(ValueError):
            tr.append(**row)


class TestMetricEvolution:
    def test_stationary(self):
        cfg = FlowConfig(eps=0.0)
        states = [(0.0, 0.0, np.ones(GRID.size)), (1e-3, 1e-3, np.ones(GRID.size))]
        rep = metric_evolution_diagnostic(states, GRID, SPEC, F4, cfg)
        assert rep.max_mismatch == 0.0

    def test_first_order_in_dt_on_constant_graph(self):
        out = []
        for dt in (2e-3, 1e-3):
            cfg = FlowConfig(eps=0.1, dt_init=dt, adaptive=False, max_steps=20)
            res = run_flow(GraphState(GRID, 1.2), SPEC, F4, cfg, record_states=True)
            out.append(metric_evolution_diagnostic(res.states, GRID, SPEC, F4, cfg).max_mismatch)
        assert out[0] < 0.05
        assert out[0] / out[1] >= 1.5

    def test_tangential_term_matters_on_wavy_graph(self):
        grid = TorusGrid(2, 32)
        u = grid.sample(lambda x, y: 1.1 + 0.03 * np.sin(2 * np.pi * x))
        cfg = FlowConfig(eps=0.1, dt_init=1e-4, adaptive=False, max_steps=3)
        res = run_flow(GraphState(grid, u), SPEC, F4, cfg, record_states=True)
        with_t = metric_evolution_diagnostic(res.states, grid, SPEC, F4, cfg).max_mismatch
        without = metric_evolution_diagnostic(res.states, grid, SPEC, F4, cfg,
                                              include_tangential=False).max_mismatch
        assert with_t < 0.05 < without
