import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorflow.ambient import SpacetimeSpec, slice_curvature
from lorflow.errors import NotSpacelike, OutOfDomain
from lorflow.graphgeo import (GraphState, TorusGrid, admissibility, build_cache, embedding_oracle_h,
                              gauss_equation_diagnostic, invariant_report, tilt_ratio,
                              weingarten_mismatch)

DESITTER = SpacetimeSpec.power_law(2.0, time_interval=(0.8, 1.2))


def wavy(grid, amp=0.1, base=1.0):
    return grid.sample(lambda *x: base + amp * np.sin(2 * np.pi * x[0] / grid.period))


def wavy2(grid, amp=0.05, base=1.0):
    L = grid.period
    return grid.sample(lambda *x: base + amp * np.sin(2 * np.pi * x[0] / L) * np.cos(2 * np.pi * x[-1] / L))


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            TorusGrid(4, 16)
        with pytest.raises(ValueError):
            TorusGrid(2, 7)
        with pytest.raises(ValueError):
            TorusGrid(2, 16, period=0)

    def test_spacing_and_coords(self):
        g = TorusGrid(2, 10, period=2.0)
        assert g.dx == pytest.approx(0.2)
        assert g.coords.shape == (2, 100)
        assert g.coords.max() == pytest.approx(1.8)

    def test_state_is_read_only(self):
        s = GraphState(TorusGrid(2, 8), 1.0)
        with pytest.raises(ValueError):
            s.u[0] = 2.0


class TestBuildCache:
    @pytest.mark.parametrize("n, beta, c", [(2, 2.0, 1.0), (2, 2.0, 0.9), (3, 1.5, 1.1), (2, 0.5, 1.2)])
    def test_constant_graph_is_umbilic_slice(self, n, beta, c, backend):
        spec = SpacetimeSpec.power_law(beta, n=n, time_interval=(0.8, 1.2))
        cache = build_cache(GraphState(TorusGrid(n, 8), c), spec)
        np.testing.assert_allclose(cache.kappa, beta * c ** (beta - 1), rtol=1e-10)
        np.testing.assert_allclose(cache.kappa, slice_curvature(spec, c), rtol=1e-10)
        assert np.all(cache.kappa > 0)  # past-directed orientation

    def test_flat_constant(self):
        spec = SpacetimeSpec.minkowski(sigma=[1.0, 3.0], time_interval=(0.5, 2.0))
        cache = build_cache(GraphState(TorusGrid(2, 8), 1.0), spec)
        assert not cache.h.any()
        np.testing.assert_array_equal(cache.v, 1.0)
        np.testing.assert_allclose(cache.g[..., 0], np.diag([1.0, 3.0]))
        assert not admissibility(cache).admissible

    def test_not_spacelike(self):
        grid = TorusGrid(2, 16)
        u = grid.sample(lambda x, y: 1.0 + 0.2 * np.sin(2 * np.pi * x))  # slope ~1.26
        with pytest.raises(NotSpacelike):
            build_cache(GraphState(grid, u), DESITTER)

    def test_out_of_domain(self):
        with pytest.raises(OutOfDomain):
            build_cache(GraphState(TorusGrid(2, 8), 1.3), DESITTER)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            build_cache(GraphState(TorusGrid(3, 8), 1.0), DESITTER)

    @pytest.mark.parametrize("n", [2, 3])
    def test_invariants_on_wavy_graph(self, n, backend):
        spec = SpacetimeSpec.perturbed_power_law(2.0, 0.05, n=n, time_interval=(0.8, 1.2),
                                                 sigma=[1.0, 1.3, 0.8][:n])
        grid = TorusGrid(n, 16 if n == 3 else 32)
        cache = build_cache(GraphState(grid, wavy2(grid)), spec, eps=0.1)
        rep = invariant_report(cache, spec)
        assert rep["inverse_metric"] <= 1e-10
        assert rep["tilt_squared"] <= 1e-10
        assert rep["tilt_from_normal"] <= 1e-10
        assert rep["h_symmetry"] <= 1e-10
        assert 0 < rep["v_min"] <= 1
        assert np.all(cache.vt >= 1)

    def test_backends_agree(self, monkeypatch):
        from lorflow import _accel
        if not _accel.HAVE_NUMBA:
            pytest.skip("numba not installed")
        grid = TorusGrid(3, 12)
        spec = SpacetimeSpec.power_law(2.0, n=3, time_interval=(0.8, 1.2))
        state = GraphState(grid, wavy2(grid))
        monkeypatch.setattr(_accel, "USE_NUMBA", False)
        a = build_cache(state, spec, 0.05)
        monkeypatch.setattr(_accel, "USE_NUMBA", True)
        b = build_cache(state, spec, 0.05)
        np.testing.assert_allclose(a.kappa, b.kappa, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(a.F, b.F, rtol=1e-10)


class TestAdmissibility:
    @pytest.mark.parametrize("eps", [0.0, 0.1, 1.0])
    @pytest.mark.parametrize("n, c", [(2, 1.3), (3, 0.9)])
    def test_umbilic_margins(self, n, c, eps):
        beta = 2.0
        spec = SpacetimeSpec.power_law(beta, n=n, time_interval=(0.5, 1.5))
        adm = admissibility(build_cache(GraphState(TorusGrid(n, 8), c), spec, eps))
        k = beta * c ** (beta - 1)
        assert adm.admissible
        assert adm.marginH2 == pytest.approx(math.comb(n, 2) * k**2 * (1 + eps * n) ** 2, rel=1e-12)
        assert adm.marginH == pytest.approx(n * k * (1 + eps * n), rel=1e-12)


class TestOracles:
    def test_embedding_oracle_zero_on_flat_slice(self):
        h = embedding_oracle_h(GraphState(TorusGrid(2, 8), 1.0), SpacetimeSpec.minkowski())
        assert np.abs(h).max() < 1e-12

    def test_embedding_oracle_second_order(self):
        spec = SpacetimeSpec.power_law(2.0, time_interval=(0.8, 1.2))
        errs = []
        for N in (32, 64, 128):
            grid = TorusGrid(2, N)
            state = GraphState(grid, wavy(grid))
            errs.append(np.abs(build_cache(state, spec).h - embedding_oracle_h(state, spec)).max())
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= 1.8), (errs, orders)

    def test_weingarten_second_order(self):
        spec = SpacetimeSpec.perturbed_power_law(2.0, 0.05, time_interval=(0.8, 1.2))
        errs = [weingarten_mismatch(GraphState(TorusGrid(2, N), wavy2(TorusGrid(2, N))), spec)
                for N in (32, 64)]
        assert math.log2(errs[0] / errs[1]) >= 1.8

    def test_tilt_bound_uniform(self):
        # |x_* xi|_ref <= c vt on g-unit tangents with c independent of the graph
        spec = SpacetimeSpec.power_law(2.0, time_interval=(0.8, 1.2))
        worst = []
        for amp in (0.0, 0.02, 0.05, 0.1, 0.15):
            for N in (32, 64):
                grid = TorusGrid(2, N)
                cache = build_cache(GraphState(grid, wavy(grid, amp)), spec)
                worst.append(tilt_ratio(cache, spec).max())
        assert max(worst) <= math.sqrt(2) + 1e-12
        assert worst[0] == pytest.approx(1.0)

    def test_gauss_flat_slice(self):
        rep = gauss_equation_diagnostic(GraphState(TorusGrid(2, 16), 1.0), SpacetimeSpec.minkowski())
        assert rep.max_mismatch < 1e-10

    def test_gauss_de_sitter_slice(self):
        spec = SpacetimeSpec.power_law(1.0, time_interval=(0.5, 2.0))
        rep = gauss_equation_diagnostic(GraphState(TorusGrid(2, 64), 1.0), spec)
        # flat torus slice: intrinsic R = 0; ambient side -2 + 6 - 2*2 = 0
        assert np.abs(rep.intrinsic).max() < 1e-10
        assert rep.relative_mismatch <= 1e-3

    def test_gauss_second_order(self):
        spec = SpacetimeSpec.power_law(1.0, time_interval=(0.5, 2.0))
        errs = []
        for N in (16, 32, 64):
            grid = TorusGrid(2, N)
            errs.append(gauss_equation_diagnostic(GraphState(grid, wavy2(grid)), spec).max_mismatch)
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= 1.8), (errs, orders)


@settings(max_examples=25)
@given(st.floats(0.0, 0.1), st.floats(0.9, 1.1), st.floats(0.0, 0.5))
def test_cache_identities_property(amp, base, eps):
    grid = TorusGrid(2, 16)
    amp = min(amp, 1.2 - base, base - 0.8)
    cache = build_cache(GraphState(grid, wavy2(grid, amp, base)), DESITTER, eps)
    rep = invariant_report(cache, DESITTER)
    assert rep["inverse_metric"] <= 1e-10 and rep["tilt_from_normal"] <= 1e-10
    assert np.all(np.diff(cache.kappa, axis=1) >= 0)
