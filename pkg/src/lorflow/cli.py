"""Command-line entry point: ``lorflow <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 invalid barriers,
4 non-convergence, 5 internal error.
"""

import argparse
import logging
from dataclasses import replace
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .ambient import check_convex, slice_curvature
from .continuation import solve, unregularized_residual, validate_barriers
from .errors import BarrierInvalid, ConfigError, LorflowError, StepCollapse
from .flow import run_flow
from .graphgeo import GraphState
from .scenario import (load_scenario, read_grid, write_axis_slices, write_grid, write_ppm,
                       write_stage_csv, write_trace_csv)
from .symcone import verify_lemma_identities

log = logging.getLogger("lorflow")

EXIT_OK, EXIT_CONFIG, EXIT_BARRIER, EXIT_NONCONVERGED, EXIT_INTERNAL = 0, 2, 3, 4, 5


def _out_dir(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args):
    if not args.scenario:
        raise ConfigError("--scenario is required for this subcommand")
    cfg = load_scenario(args.scenario)
    return cfg.with_overrides(eps=args.eps, points=args.grid, max_steps=args.max_steps, seed=args.seed)


def _say(args, text=""):
    if not args.quiet:
        print(text)


def cmd_solve(args):
    cfg = _scenario(args)
    out = _out_dir(args)
    pair = cfg.barriers()

    def progress(stage, trace):
        log.info("eps=%.4g converged=%s steps=%d res=%.3e", stage.eps, stage.converged,
                 stage.steps, stage.res_sup)

    try:
        report = solve(cfg.spec, cfg.f, pair, cfg.schedule, cfg.flow, on_stage=progress,
                       warm_start=cfg.warm_start)
    except StepCollapse as exc:
        report = getattr(exc, "report", None)
        if report is not None:
            _write_solve(out, cfg, report)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    _write_solve(out, cfg, report)
    for line in report.summary_lines():
        _say(args, line)
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def _write_solve(out, cfg, report):
    (out / "report.txt").write_text("\n".join(report.summary_lines()) + "\n")
    write_stage_csv(out / "eps_table.csv", report.stages)
    write_grid(out / "solution.lorgrid", cfg.grid, report.state.u, cfg.spec.time_interval)
    write_grid(out / "residual.lorgrid", cfg.grid, report.residual_field, cfg.spec.time_interval)
    for j, trace in enumerate(report.traces):
        write_trace_csv(out / f"trace_stage{j}.csv", trace)


def cmd_flow(args):
    cfg = _scenario(args)
    out = _out_dir(args)
    eps = args.eps if args.eps is not None else cfg.schedule.eps0
    flow = replace(cfg.flow, eps=eps)
    pair = cfg.barriers()
    rep = validate_barriers(pair, cfg.spec, cfg.f, eps, flow.cutoff)
    if not rep.passed:
        raise BarrierInvalid("; ".join(rep.messages))
    try:
        res = run_flow(GraphState(cfg.grid, pair.u2), cfg.spec, cfg.f, flow, barriers=(pair.u1, pair.u2))
    except StepCollapse as exc:
        if exc.trace is not None:
            write_trace_csv(out / "trace.csv", exc.trace)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    write_trace_csv(out / "trace.csv", res.trace)
    write_grid(out / "final.lorgrid", cfg.grid, res.state.u, cfg.spec.time_interval)
    u = res.state.u
    _say(args, f"eps={eps:g} converged={res.converged} steps={res.steps} "
               f"res={res.evaluation.sup:.3e} u=[{u.min():.10g}, {u.max():.10g}] "
               f"violations={len(res.trace.violations)}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_slice_info(args):
    cfg = _scenario(args)
    spec = cfg.spec
    a, b = spec.time_interval
    rows = args.samples or 9
    n = spec.n
    lines = ["c,kappa,H2"]
    for c in np.linspace(a, b, rows):
        k = slice_curvature(spec, c)
        lines.append(f"{c:.17g},{k:.17g},{0.5 * n * (n - 1) * k * k:.17g}")
    if args.out:
        (_out_dir(args) / "slices.csv").write_text("\n".join(lines) + "\n")
    _say(args, "\n".join(lines))
    return EXIT_OK


def cmd_check_identities(args):
    samples = args.samples or 100_000
    seed = args.seed if args.seed is not None else 20011930
    rep = verify_lemma_identities(samples=samples, seed=seed)
    for line in rep.lines():
        _say(args, line)
    return EXIT_OK if rep.passed else EXIT_INTERNAL


def cmd_validate_config(args):
    cfg = _scenario(args)
    rep = validate_barriers(cfg.barriers(), cfg.spec, cfg.f, cfg.schedule.values(), cfg.flow.cutoff)
    _say(args, f"scenario {cfg.source}: schema ok ({cfg.spec.describe()}, grid {cfg.grid.points}^{cfg.grid.n})")
    _say(args, f"upper barrier margin min(F - f): {rep.upper_margin:.6g}")
    _say(args, f"lower barrier margin max(F - f): {rep.lower_margin:.6g} "
               f"(admissible fraction {rep.lower_admissible_fraction:.3g})")
    for w in rep.warnings:
        _say(args, f"warning: {w}")
    if cfg.convexity is not None:
        conv = check_convex(cfg.convexity, cfg.spec, cfg.convexity_samples, cfg.seed)
        _say(args, f"convexity: {'pass' if conv.passed else 'fail'} (margin {conv.margin:.3e})")
    if not rep.passed:
        for m in rep.messages:
            print(f"barrier: {m}", file=sys.stderr)
        return EXIT_BARRIER
    return EXIT_OK


def cmd_render(args):
    if not args.input:
        raise ConfigError("--input is required for render")
    grid, u, interval = read_grid(args.input)
    out = _out_dir(args)
    paths = write_axis_slices(out, grid, u)
    if grid.n == 2:
        write_ppm(out / "u.ppm", u.reshape(grid.shape))
        paths.append(out / "u.ppm")
        if args.scenario:
            cfg = load_scenario(args.scenario)
            res = unregularized_residual(GraphState(grid, u), cfg.spec, cfg.f)
            write_ppm(out / "residual.ppm", res.reshape(grid.shape))
            paths.append(out / "residual.ppm")
    for p in paths:
        _say(args, str(p))
    return EXIT_OK


COMMANDS = {
    "solve": (cmd_solve, "run the eps continuation and write report, tables and grids"),
    "flow": (cmd_flow, "run one regularized flow from the upper barrier"),
    "slice-info": (cmd_slice_info, "tabulate coordinate-slice curvatures over the time interval"),
    "check-identities": (cmd_check_identities, "run the randomized curvature-identity suite"),
    "validate-config": (cmd_validate_config, "check a scenario file and its barriers"),
    "render": (cmd_render, "write axis CSV slices and heatmaps of a grid dump"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="lorflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"lorflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--scenario", help="scenario file")
        s.add_argument("--out", help="output directory")
        s.add_argument("--eps", type=float, help="eps override (solve: final eps; flow: the eps)")
        s.add_argument("--grid", type=int, help="points per axis override")
        s.add_argument("--max-steps", type=int, help="accepted-step limit per flow")
        s.add_argument("--seed", type=int, help="seed for sampling")
        s.add_argument("--samples", type=int, help="sample count (check-identities, slice-info)")
        s.add_argument("--input", help="LORGRID file (render)")
        s.add_argument("--quiet", action="store_true", help="suppress normal output")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except LorflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
