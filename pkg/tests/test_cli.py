import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from fcs import cli
from fcs.curves import ForwardCurve, Grid, write_curve
from fcs.errors import ConfigError


def run_cli(args, cwd, env=None):
    import os

    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "fcs.cli", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
        env=full_env,
    )


class TestParseConfig:
    def test_defaults(self):
        sub, cfg = cli.parse_config(["spectrum"])
        assert sub == "spectrum"
        assert cfg["beta"] == 1.0 and cfg["gamma"] == 2.0 and cfg["cells"] == 64

    def test_flag_overrides_default(self):
        _, cfg = cli.parse_config(["spectrum", "--beta", "0.5", "--gamma", "3.0"])
        assert cfg["beta"] == 0.5 and cfg["gamma"] == 3.0

    def test_flag_overrides_file(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("seed=7\ncells=32\n")
        _, cfg = cli.parse_config(["spectrum", "--config", str(conf), "--seed", "9"])
        assert cfg["seed"] == 9  # flag wins
        assert cfg["cells"] == 32  # file beats default

    def test_unknown_key_rejected(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("sead=7\n")
        with pytest.raises(ConfigError, match="unknown key"):
            cli.parse_config(["spectrum", "--config", str(conf)])

    def test_bad_value_type_rejected(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("cells=many\n")
        with pytest.raises(ConfigError, match="bad value"):
            cli.parse_config(["spectrum", "--config", str(conf)])

    def test_comments_and_blank_lines(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("# comment\n\ncells=16  # trailing\n")
        _, cfg = cli.parse_config(["spectrum", "--config", str(conf)])
        assert cfg["cells"] == 16

    def test_weight_constraint_checked_before_compute(self, tmp_path):
        import fcs.curves  # noqa: F401  -- timing excludes one-time imports

        out = tmp_path / "o"
        started = time.perf_counter()
        with pytest.raises(ConfigError):
            cli.run("spectrum", {**dict_defaults("spectrum"), "beta": 2.0, "gamma": 2.0, "out-dir": str(out)})
        elapsed = time.perf_counter() - started
        assert elapsed < 0.1
        assert not out.exists()


def dict_defaults(sub):
    return {k: v[1] for k, v in cli._SPEC[sub].items()}


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path):
        res = run_cli(["spectrum", "--beta", "2", "--gamma", "2"], tmp_path)
        assert res.returncode == 2
        assert "config error" in res.stderr
        assert not (tmp_path / "out").exists()

    def test_pass_is_0(self, tmp_path):
        res = run_cli(["spectrum", "--cells", "16", "--no-plots"], tmp_path)
        assert res.returncode == 0, res.stderr
        assert (tmp_path / "out" / "spectrum.csv").exists()

    def test_misaligned_sim_grid_is_config_error(self, tmp_path):
        res = run_cli(["simulate", "--dt", "0.007", "--no-plots"], tmp_path)
        assert res.returncode == 2


class TestSpectrumCommand:
    def test_csv_shape(self, tmp_path):
        res = run_cli(["spectrum", "--cells", "64", "--no-plots"], tmp_path)
        assert res.returncode == 0
        lines = (tmp_path / "out" / "spectrum.csv").read_text().splitlines()
        assert lines[0] == "k,s_k,defect_T_k"
        assert len(lines) - 1 <= 64
        assert all(len(row.split(",")) == 3 for row in lines[1:])

    def test_plots_rendered_alongside_csv(self, tmp_path):
        res = run_cli(["spectrum", "--cells", "16"], tmp_path)
        assert res.returncode == 0
        assert (tmp_path / "out" / "spectrum.png").exists()


class TestSimulateCommand:
    def test_paths_csv_and_snapshots(self, tmp_path):
        res = run_cli(
            [
                "simulate", "--paths", "3", "--t-max", "0.125", "--dt", str(1 / 64),
                "--x-max", "2.0", "--snapshot-every", "4", "--no-plots",
            ],
            tmp_path,
        )
        assert res.returncode == 0, res.stderr
        out = tmp_path / "out"
        header = (out / "paths.csv").read_text().splitlines()[0]
        assert header == "path,t,hgamma_norm,r0,r_probe"
        snaps = sorted(out.glob("curve_p0_step*.txt"))
        assert len(snaps) == 3  # steps 0, 4, 8 of 8
        assert snaps[0].read_text().startswith("grid x_max=")

    def test_h0_file_round_trip(self, tmp_path):
        dt, x_max, t_max = 1 / 64, 2.0, 0.125
        grid = Grid.uniform(x_max + t_max, int(round((x_max + t_max) / dt)))
        h0 = ForwardCurve.from_function(grid, lambda x: 0.04 + 0.01 * np.exp(-x), h_inf=0.04)
        curve_file = tmp_path / "h0.txt"
        write_curve(h0, str(curve_file))
        res = run_cli(
            [
                "simulate", "--paths", "2", "--t-max", "0.125", "--dt", str(dt),
                "--x-max", "2.0", "--h0-file", str(curve_file), "--no-plots",
            ],
            tmp_path,
        )
        assert res.returncode == 0, res.stderr
        first_rows = (tmp_path / "out" / "paths.csv").read_text().splitlines()[1]
        r0 = float(first_rows.split(",")[3])
        assert r0 == pytest.approx(h0.h0, rel=1e-12)


class TestApproximateCommand:
    def test_summary_and_margins(self, tmp_path):
        res = run_cli(
            [
                "approximate", "--rank", "4", "--eps", "0.01", "--paths", "10",
                "--t-max", "0.125", "--dt", str(1 / 64), "--x-max", "2.0", "--no-plots",
            ],
            tmp_path,
        )
        assert res.returncode == 0, res.stderr
        out = tmp_path / "out"
        summary = (out / "audit_summary.csv").read_text().splitlines()
        assert summary[0] == "audit,value,passed"
        vals = {row.split(",")[0]: row.split(",")[1:] for row in summary[1:]}
        assert float(vals["norm_conv_n4"][0]) <= 1.0
        assert (out / "audit_norm_conv_n4.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["all_passed"] is True

    def test_auto_threshold_validation(self, tmp_path):
        res = run_cli(
            [
                "approximate", "--threshold-K", "0.01", "--paths", "2",
                "--t-max", "0.125", "--dt", str(1 / 64), "--x-max", "2.0", "--no-plots",
            ],
            tmp_path,
        )
        assert res.returncode == 2  # below the initial curve norm


class TestVerifyAll:
    def test_runs_and_reports(self, tmp_path):
        res = run_cli(["verify-all", "--seed", "3", "--no-plots"], tmp_path)
        assert res.returncode == 0, res.stderr
        out = tmp_path / "out"
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["all_passed"] is True
        names = {c["name"] for c in manifest["checks"]}
        assert {"spectrum_nonincreasing", "plancherel_ensemble", "paths_finite", "norm_conv_n4"} <= names

    def test_thread_cap_env_accepted(self, tmp_path):
        res = run_cli(["spectrum", "--cells", "8", "--no-plots"], tmp_path, env={"FCS_THREADS": "1"})
        assert res.returncode == 0
