import numpy as np
import pytest

from lorflow.ambient import SpacetimeSpec
from lorflow.continuation import (BarrierPair, ContinuationSchedule, solve, unregularized_residual,
                                  validate_barriers)
from lorflow.errors import BarrierInvalid, StepCollapse
from lorflow.flow import FlowConfig, PrescribedF
from lorflow.graphgeo import GraphState, TorusGrid

SPEC = SpacetimeSpec.power_law(2.0, time_interval=(0.8, 1.2))
GRID = TorusGrid(2, 16)
F4 = PrescribedF("4", c1=4)


class TestSchedule:
    def test_values(self):
        vals = ContinuationSchedule(0.1, 0.3, 1e-3).values()
        np.testing.assert_allclose(vals, [0.1, 0.03, 0.009, 0.0027, 0.001])

    def test_single_stage(self):
        assert ContinuationSchedule(0.1, 0.5, 0.1).values() == [0.1]

    @pytest.mark.parametrize("kw", [dict(eps0=0), dict(eps_min=0.5), dict(rho=1.0), dict(rho=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ContinuationSchedule(**kw)

    def test_strictly_decreasing(self):
        for rho in (0.1, 0.5, 0.9):
            v = ContinuationSchedule(1.0, rho, 1e-4).values()
            assert np.all(np.diff(v) < 0) and v[-1] == 1e-4


class TestBarriers:
    def test_valid_pair(self):
        rep = validate_barriers(BarrierPair(GRID, 0.8, 1.2), SPEC, F4, [0.1, 0.001])
        assert rep.passed and rep.ordered and rep.upper_admissible
        # upper: 2.4 (1 + 2 eps) - 2 at eps = 0.001
        assert rep.upper_margin == pytest.approx(2.4 * 1.002 - 2)
        assert rep.lower_margin == pytest.approx(1.6 * 1.2 - 2)
        assert rep.lower_admissible_fraction == 1.0

    def test_swapped(self):
        rep = validate_barriers(BarrierPair(GRID, 1.2, 0.8), SPEC, F4, 0.1)
        assert not rep.passed and not rep.ordered

    def test_upper_fails_for_large_f(self):
        rep = validate_barriers(BarrierPair(GRID, 0.8, 1.2), SPEC, PrescribedF("10"), 0.1)
        assert not rep.passed
        assert rep.upper_margin < 0

    def test_lower_fails_when_eps_too_large(self):
        # at eps = 0.1 the lower slice has F = 1.6 * 1.2 = 1.92 < 2, at eps = 0.2 it is 2.24
        rep = validate_barriers(BarrierPair(GRID, 0.8, 1.2), SPEC, F4, [0.1, 0.2])
        assert not rep.passed and rep.lower_margin > 0

    def test_equality_warns(self):
        f = PrescribedF(repr(float(1.6 * 1.2) ** 2))
        rep = validate_barriers(BarrierPair(GRID, 0.8, 1.2), SPEC, f, 0.1)
        assert rep.passed and rep.warnings


class TestSolve:
    def test_small_grid_converges_to_slice(self):
        sched = ContinuationSchedule(0.1, 0.3, 1e-3)
        rep = solve(SPEC, F4, BarrierPair(GRID, 0.8, 1.2), sched)
        assert rep.converged
        assert len(rep.stages) == 5
        assert np.abs(rep.state.u - 1).max() <= 5e-3
        assert rep.final_residual <= 0.05
        assert rep.uniform_tilt
        assert not rep.violations
        np.testing.assert_allclose(rep.residual_field,
                                   unregularized_residual(rep.state, SPEC, F4))
        assert "converged: True" in rep.summary_lines()

    def test_residual_shrinks_with_eps_min(self):
        finals = []
        for eps_min in (1e-2, 1e-3):
            rep = solve(SPEC, F4, BarrierPair(GRID, 0.8, 1.2), ContinuationSchedule(0.1, 0.3, eps_min))
            finals.append(rep.final_residual)
        assert finals[1] < finals[0] / 5

    def test_invalid_barriers_raise(self):
        with pytest.raises(BarrierInvalid):
            solve(SPEC, PrescribedF("10"), BarrierPair(GRID, 0.8, 1.2))

    def test_collapse_carries_report(self):
        flow = FlowConfig(dt_init=100.0, adaptive=False, min_dt=60.0)
        with pytest.raises(StepCollapse) as exc:
            solve(SPEC, F4, BarrierPair(GRID, 0.8, 1.2), ContinuationSchedule(0.1, 0.3, 0.1), flow)
        rep = exc.value.report
        assert not rep.converged and len(rep.stages) == 1

    def test_stage_callback(self):
        seen = []
        solve(SPEC, F4, BarrierPair(GRID, 0.8, 1.2), ContinuationSchedule(0.1, 0.3, 0.03),
              on_stage=lambda s, tr: seen.append((s.eps, len(tr))))
        assert [e for e, _ in seen] == [0.1, 0.03]

    def test_cold_stages_descend_warm_stages_ascend(self):
        pair = BarrierPair(GRID, 0.8, 1.2)
        sched = ContinuationSchedule(0.1, 0.3, 0.01)
        for warm in (False, True):
            rep = solve(SPEC, F4, pair, sched, warm_start=warm, record_states=True)
            assert rep.converged
            for j, states in enumerate(rep.states):
                du = np.diff(np.array([u for _, _, u in states]), axis=0)
                if warm and j > 0:
                    assert du.min() >= -1e-12 and states[0][2].max() < 1.2
                else:
                    assert du.max() <= 1e-12 and states[0][2].min() == 1.2
            # eps-solutions 2c(1 + 2 eps) = 2 rise as eps shrinks
            np.testing.assert_allclose(rep.state.u, 1 / 1.02, rtol=1e-6)


@pytest.mark.slow
def test_perturbed_scenario_end_to_end(scenario_dir):
    from lorflow.scenario import load_scenario
    cfg = load_scenario(scenario_dir / "perturbed_power_law.scn")
    pair = cfg.barriers()
    rep = solve(cfg.spec, cfg.f, pair, cfg.schedule, cfg.flow)
    assert rep.converged and rep.uniform_tilt
    assert np.all(rep.state.u >= pair.u1) and np.all(rep.state.u <= pair.u2)
    assert rep.final_residual < 0.1
    # the x-dependent data leave a genuinely non-constant solution
    assert np.ptp(rep.state.u) > 1e-3
