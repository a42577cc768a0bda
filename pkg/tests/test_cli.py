import json
import os

import numpy as np
import pytest

from ddhopf.cli import main
from ddhopf.harness import load_config, loglog_fit, write_csv, RunConfig
from ddhopf.plots import MissingInputs, render_all

from conftest import R2_STRONG


CFG = """
[common]
Pr = 7.0
d = 0.1
R2 = {r2}
J = 4
K = 4
M = 6

[critical]
eps_list = 0, 0.05, 0.025

[sweep-eps]
eps_list = 0, 0.05
R2_list = 0.0, {r2}

[branch]
eps_list = 0, 0.05
delta_list = 0.05, 0.1
tol = 1e-12
dump_orbits = last

[floquet]
eps = 0.05
delta_list = 0.1
nsteps = 1024
hill_M = 4

[simulate]
eps = 0.1
delta = 0.25
mode = sub
T_max = 30
eta_sub = 0.03
diag_steps = 1500
""".format(r2=R2_STRONG)


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "run.ini"
    path.write_text(CFG)
    return str(path)


class TestConfig:
    def test_defaults_and_hash(self):
        cfg = load_config(None)
        assert cfg.section("critical")["Pr"] == "7.0"
        assert len(cfg.sha256) == 64
        # same content -> same hash
        assert load_config(None).sha256 == cfg.sha256

    def test_section_merge(self, cfg_file):
        cfg = load_config(cfg_file)
        sec = cfg.section("branch")
        assert sec["J"] == "4"             # from [common]
        assert sec["delta_list"] == "0.05, 0.1"


class TestFits:
    def test_loglog_fit_exact_power(self):
        x = np.array([1.0, 2.0, 4.0, 8.0])
        fit = loglog_fit(x, 3.0 * x ** 2)
        assert fit.slope == pytest.approx(2.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert len(fit.points) == 4

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            loglog_fit([1.0, 2.0], [1.0, 2.0])


class TestCommands:
    def test_critical(self, cfg_file, tmp_path):
        out = str(tmp_path / "o")
        assert main(["critical", "--config", cfg_file, "--out", out]) == 0
        lines = open(os.path.join(out, "critical.csv")).read().splitlines()
        assert lines[0].startswith("# ddhopf ")
        assert "config_sha256=" in lines[0]
        doc = json.load(open(os.path.join(out, "critical.json")))
        assert "R1_drift" in doc["fits"]
        # eps = 0 baseline row present
        assert any(r["eps"] == 0.0 for r in doc["rows"])

    def test_sweep_partial_exit_code(self, cfg_file, tmp_path):
        # R2 = 0 rows are SteadyOnsetFirst -> partial (exit 2)
        out = str(tmp_path / "o")
        assert main(["sweep-eps", "--config", cfg_file, "--out", out]) == 2
        lines = open(os.path.join(out, "sweep.csv")).read().splitlines()
        assert any("SteadyOnsetFirst" in ln for ln in lines)

    def test_branch_floquet_simulate_plots(self, cfg_file, tmp_path):
        out = str(tmp_path / "o")
        assert main(["branch", "--config", cfg_file, "--out", out]) == 0
        doc = json.load(open(os.path.join(out, "branch_eps0.05.json")))
        assert all("error" not in q for q in doc["points"])
        assert doc["points"][0]["residual"] <= 1e-9
        assert os.path.exists(os.path.join(out, "orbit_eps0.05_delta0.1.json"))

        assert main(["floquet", "--config", cfg_file, "--out", out]) == 0
        lines = open(os.path.join(out, "floquet.csv")).read().splitlines()
        assert lines[1].split(",")[0] == "eps"

        assert main(["simulate", "--config", cfg_file, "--out", out,
                     "--seed", "7"]) == 0
        doc = json.load(open(os.path.join(out, "simulate.json")))
        assert doc["summary"]["ratio"] == pytest.approx(1.0, abs=0.1)
        assert os.path.exists(os.path.join(out, "restart.json"))

        made = [os.path.basename(p) for p in
                (main(["plots", "--out", out]), )] and True
        assert main(["plots", "--out", out]) == 0
        for name in ("critical_drift.png", "branch_eta.png",
                     "floquet_lambda.png", "energy_trace.png"):
            assert os.path.exists(os.path.join(out, name))
        # idempotent re-render
        assert main(["plots", "--out", out]) == 0

    def test_plots_empty_dir_lists_missing(self, tmp_path):
        out = str(tmp_path / "empty")
        os.makedirs(out)
        assert main(["plots", "--out", out]) == 1
        with pytest.raises(MissingInputs) as ei:
            render_all(out)
        msg = str(ei.value)
        for name in ("critical.csv", "floquet.csv", "simulate.csv"):
            assert name in msg

    def test_determinism_byte_identical(self, cfg_file, tmp_path):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        for out in (out1, out2):
            assert main(["critical", "--config", cfg_file, "--out", out,
                         "--seed", "3"]) == 0
        for name in ("critical.csv", "critical.json"):
            b1 = open(os.path.join(out1, name), "rb").read()
            b2 = open(os.path.join(out2, name), "rb").read()
            assert b1 == b2
