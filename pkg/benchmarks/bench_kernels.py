"""Time the numpy and numba kernel flavours side by side.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Each kernel is checked for agreement before timing.  The last block times a
full geometry build (the per-step cost of the flow) with each backend.
"""

import argparse
import timeit

import numpy as np

from lorflow import _accel, kernels
from lorflow.ambient import SpacetimeSpec
from lorflow.graphgeo import GraphState, TorusGrid, build_cache


def _inputs(n, N, rng):
    grid = TorusGrid(n, N)
    u = 1.0 + 0.05 * rng.standard_normal(grid.size)
    field = rng.standard_normal((n * n, grid.size))
    a = rng.standard_normal((n, n, grid.size)) * 0.1
    g = np.eye(n)[:, :, None] + np.einsum("ikp,jkp->ijp", a, a)
    h = rng.standard_normal((n, n, grid.size))
    h = 0.5 * (h + np.swapaxes(h, 0, 1))
    kappa = rng.uniform(0.5, 2.0, (grid.size, n))
    return grid, u, field, g, h, kappa


def _time(fn, repeat):
    fn()  # warm-up (and JIT compile)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy flavour exists")
        return
    rng = np.random.default_rng(0)
    print(f"{'case':<28}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for n, N in ((2, 64), (2, 128), (3, 32)):
        grid, u, field, g, h, kappa = _inputs(n, N, rng)
        nbr = grid.neighbours
        cases = {
            "gradient": ((field, nbr, grid.dx), {}),
            "hessian": ((u, nbr, grid.dx), {}),
            "spectra": ((g, h), {}),
            "response": ((kappa, 0.1), {}),
        }
        for name, (call_args, _) in cases.items():
            f_np = kernels.IMPLEMENTATIONS["numpy"][name]
            f_nb = kernels.IMPLEMENTATIONS["numba"][name]
            ref, got = f_np(*call_args), f_nb(*call_args)
            for r, o in zip(ref if isinstance(ref, tuple) else (ref,),
                            got if isinstance(got, tuple) else (got,)):
                np.testing.assert_allclose(o, r, rtol=1e-10, atol=1e-10)
            t_np = _time(lambda: f_np(*call_args), args.repeat)
            t_nb = _time(lambda: f_nb(*call_args), args.repeat)
            print(f"{name + f' n={n} N={N}':<28}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.1f}")

        spec = SpacetimeSpec.power_law(2.0, n=n, time_interval=(0.5, 2.0))
        state = GraphState(grid, grid.sample(lambda *x: 1.0 + 0.02 * np.sin(2 * np.pi * x[0])))
        timings = []
        for flag in (False, True):
            _accel.USE_NUMBA = flag
            timings.append(_time(lambda: build_cache(state, spec, 0.1), max(3, args.repeat // 4)))
        _accel.USE_NUMBA = True
        print(f"{f'build_cache n={n} N={N}':<28}{1e3 * timings[0]:>12.3f}{1e3 * timings[1]:>12.3f}"
              f"{timings[0] / timings[1]:>10.1f}")


if __name__ == "__main__":
    main()
