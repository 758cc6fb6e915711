import shutil
import subprocess
import sys

import numpy as np
import pytest

from lorflow.cli import main
from lorflow.scenario import read_grid, read_ppm


def run(*argv):
    return main([str(a) for a in argv])


class TestExitCodes:
    def test_solve_golden(self, scenario_dir, tmp_path, capsys):
        assert run("solve", "--scenario", scenario_dir / "desitter_umbilic.scn", "--out", tmp_path) == 0
        out = capsys.readouterr().out
        assert "converged: True" in out
        grid, u, interval = read_grid(tmp_path / "solution.lorgrid")
        assert np.abs(u - 1).max() <= 5e-3 and interval == (0.8, 1.2)
        names = {p.name for p in tmp_path.iterdir()}
        assert {"report.txt", "eps_table.csv", "solution.lorgrid", "residual.lorgrid",
                "trace_stage0.csv", "trace_stage4.csv"} <= names
        assert len((tmp_path / "eps_table.csv").read_text().splitlines()) == 6

    def test_solve_non_convergence(self, scenario_dir, tmp_path):
        code = run("solve", "--scenario", scenario_dir / "desitter_umbilic.scn", "--out", tmp_path,
                   "--grid", 16, "--max-steps", 3, "--quiet")
        assert code == 4
        assert "converged: False" in (tmp_path / "report.txt").read_text()

    def test_flow(self, scenario_dir, tmp_path, capsys):
        code = run("flow", "--scenario", scenario_dir / "desitter_umbilic.scn", "--out", tmp_path,
                   "--grid", 16, "--eps", 0.05)
        assert code == 0
        assert "eps=0.05 converged=True" in capsys.readouterr().out
        assert (tmp_path / "trace.csv").read_text().startswith("step,t,dt,")

    def test_flow_trace_is_byte_identical(self, scenario_dir, tmp_path):
        for d in ("a", "b"):
            run("flow", "--scenario", scenario_dir / "tilt_dependent.scn", "--out", tmp_path / d,
                "--grid", 16, "--quiet")
        assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()

    def test_slice_info(self, scenario_dir, tmp_path, capsys):
        assert run("slice-info", "--scenario", scenario_dir / "desitter_umbilic.scn", "--samples", 5,
                   "--out", tmp_path) == 0
        lines = capsys.readouterr().out.split()
        assert lines[0] == "c,kappa,H2"
        c, k, h2 = map(float, lines[3].split(","))
        assert (c, k, h2) == pytest.approx((1.0, 2.0, 4.0))
        assert (tmp_path / "slices.csv").exists()

    def test_check_identities(self, capsys):
        assert run("check-identities", "--samples", 2000, "--seed", 3) == 0
        assert "PASS" in capsys.readouterr().out

    def test_validate_config_ok(self, scenario_dir):
        assert run("validate-config", "--scenario", scenario_dir / "desitter_umbilic.scn", "--quiet") == 0

    @pytest.mark.parametrize("name, code", [
        ("swapped_barriers.scn", 3),
        ("upper_barrier_fails.scn", 3),
        ("bad_eps.scn", 2),
        ("unknown_key.scn", 2),
    ])
    def test_invalid_fixtures(self, scenario_dir, name, code, capsys):
        assert run("validate-config", "--scenario", scenario_dir / name) == code
        assert "error" in capsys.readouterr().err or code == 3

    def test_unknown_key_message(self, scenario_dir, capsys):
        run("validate-config", "--scenario", scenario_dir / "unknown_key.scn")
        assert "unknown key 'fooo' in section [solver]" in capsys.readouterr().err

    def test_convexity_report(self, scenario_dir, capsys):
        run("validate-config", "--scenario", scenario_dir / "minkowski_convexity.scn")
        assert "convexity: pass" in capsys.readouterr().out

    def test_missing_scenario(self):
        assert run("solve") == 2

    def test_render(self, scenario_dir, tmp_path):
        sol = tmp_path / "solve"
        run("solve", "--scenario", scenario_dir / "desitter_umbilic.scn", "--out", sol, "--grid", 16,
            "--quiet")
        out = tmp_path / "render"
        assert run("render", "--input", sol / "solution.lorgrid", "--scenario",
                   scenario_dir / "desitter_umbilic.scn", "--out", out, "--quiet") == 0
        assert read_ppm(out / "u.ppm").shape == (64, 64, 3)
        assert read_ppm(out / "residual.ppm").shape == (64, 64, 3)
        assert (out / "u_axis1.csv").exists() and (out / "u_axis2.csv").exists()

    def test_render_needs_input(self):
        assert run("render") == 2


def test_console_script(scenario_dir):
    exe = shutil.which("lorflow")
    cmd = [exe] if exe else [sys.executable, "-m", "lorflow.cli"]
    proc = subprocess.run(cmd + ["validate-config", "--scenario", str(scenario_dir / "swapped_barriers.scn")],
                          capture_output=True, text=True)
    assert proc.returncode == 3
