"""Command line driver: exit codes, output files, determinism."""

import filecmp
import os
import subprocess
import sys

import pytest
import yaml

from relaygame.cli import main

# keep every invocation on a coarse grid so models stay tiny
FAST = ["--override", "scenario.grid_spacing_m=20"]

SMALL_NET = [
    "--override", "netsim.node_count=120",
    "--override", "netsim.area_m=300",
    "--override", "netsim.source_position=[0, 300]",
    "--override", "netsim.sink_position=[300, 0]",
    "--override", "netsim.lambda_grid=[0.0]",
    "--override", "netsim.seed_count=1",
    "--override", "netsim.source_packet_count=20",
]


def read_manifest(out_dir):
    with open(os.path.join(out_dir, "manifest.yaml"), "r", encoding="utf-8") as fh:
        return yaml.safe_load(fh)


def first_line(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.readline().strip()


class TestSolveCommands:
    def test_solve_co_writes_nepp_and_solution(self, tmp_path):
        out = str(tmp_path / "co")
        code = main(["solve-co", "--out", out, "--theta", "10",
                     "--family", "SC"] + FAST)
        assert code == 0
        assert first_line(os.path.join(out, "nepp.csv")) == "theta,family,C1,C2"
        assert os.path.exists(os.path.join(out, "solution.yaml"))
        manifest = read_manifest(out)
        assert manifest["command"] == "solve-co"
        assert manifest["status"] == "complete"
        assert set(manifest) >= {"command", "package_version", "status",
                                 "seed", "outputs", "spec"}
        assert "nepp.csv" in manifest["outputs"]

    def test_solve_po_writes_thresholds(self, tmp_path):
        out = str(tmp_path / "po")
        code = main(["solve-po", "--out", out, "--theta", "10",
                     "--variant", "NABLA"] + FAST)
        assert code == 0
        header = first_line(os.path.join(out, "thresholds.csv"))
        assert header.startswith("location")
        assert read_manifest(out)["status"] == "complete"

    def test_solve_coop_writes_frontier(self, tmp_path):
        out = str(tmp_path / "coop")
        code = main(["solve-coop", "--out", out, "--theta", "10",
                     "--override", "solve.gamma_grid=[0.3, 0.5]"] + FAST)
        assert code == 0
        assert first_line(os.path.join(out, "frontier.csv")) == "gamma,C1,C2"

    def test_eval_simple(self, tmp_path):
        out = str(tmp_path / "simple")
        code = main(["eval-simple", "--out", out, "--theta", "10"] + FAST)
        assert code == 0
        lines = open(os.path.join(out, "nepp.csv"), encoding="utf-8").read().splitlines()
        assert lines[0] == "theta,family,C1,C2"
        assert len(lines) == 2

    def test_verify_certifies(self, tmp_path):
        out = str(tmp_path / "verify")
        code = main(["verify", "--out", out, "--theta", "10",
                     "--family", "CS"] + FAST)
        assert code == 0
        with open(os.path.join(out, "verify.yaml"), encoding="utf-8") as fh:
            report = yaml.safe_load(fh)
        assert report["passed"] is True

    def test_scenario_file_is_honored(self, tmp_path):
        scenario = tmp_path / "scenario.yaml"
        scenario.write_text(
            "scenario:\n  grid_spacing_m: 20.0\n  theta_m: 10.0\n",
            encoding="utf-8",
        )
        out = str(tmp_path / "out")
        code = main(["solve-co", str(scenario), "--out", out])
        assert code == 0
        assert read_manifest(out)["spec"]["scenario"]["grid_spacing_m"] == 20.0


class TestSweepAndNetsim:
    @pytest.mark.filterwarnings("ignore:dropping 1 grid point")
    def test_onehop_sweep_points(self, tmp_path):
        out = str(tmp_path / "sweep")
        code = main([
            "onehop-sweep", "--out", out,
            "--override", "sweep.theta_values=[0, 10]",
            "--override", "solve.gamma_grid=[0.3, 0.5]",
        ] + FAST)
        assert code == 0
        lines = open(os.path.join(out, "points.csv"), encoding="utf-8").read().splitlines()
        assert lines[0] == "theta,point,C1,C2,converged,iterations"
        names = {row.split(",")[1] for row in lines[1:]}
        assert {"co_sc", "co_cs", "co_mixed", "po_nabla", "po_delta",
                "simple"} <= names
        assert any(name.startswith("coop_") for name in names)
        thetas = {row.split(",")[0] for row in lines[1:]}
        assert thetas == {"0.0", "10.0"}

    def test_onehop_sweep_reruns_byte_identical(self, tmp_path):
        args = [
            "onehop-sweep",
            "--override", "sweep.theta_values=[10]",
            "--override", "solve.gamma_grid=[0.5]",
        ] + FAST
        out_a = str(tmp_path / "a")
        out_b = str(tmp_path / "b")
        assert main(args + ["--out", out_a]) == 0
        assert main(args + ["--out", out_b]) == 0
        assert filecmp.cmp(os.path.join(out_a, "points.csv"),
                           os.path.join(out_b, "points.csv"), shallow=False)

    def test_netsim_complete(self, tmp_path):
        out = str(tmp_path / "net")
        code = main(["netsim", "--out", out] + SMALL_NET)
        assert code == 0
        assert first_line(os.path.join(out, "packets.csv")) == \
            "lambda,seed,packet_id,delay_s,power_mw,hops,contentions"
        agg = open(os.path.join(out, "aggregate.csv"), encoding="utf-8").read().splitlines()
        assert agg[0] == "lambda,mean_delay,se_delay,mean_power,se_power"
        assert len(agg) == 2
        assert read_manifest(out)["status"] == "complete"

    def test_netsim_determinism(self, tmp_path):
        out_a = str(tmp_path / "a")
        out_b = str(tmp_path / "b")
        assert main(["netsim", "--out", out_a] + SMALL_NET) == 0
        assert main(["netsim", "--out", out_b] + SMALL_NET) == 0
        assert filecmp.cmp(os.path.join(out_a, "packets.csv"),
                           os.path.join(out_b, "packets.csv"), shallow=False)

    def test_netsim_truncation_is_exit_2(self, tmp_path):
        out = str(tmp_path / "net")
        code = main(["netsim", "--out", out,
                     "--override", "netsim.safety_horizon_s=2.0"] + SMALL_NET)
        assert code == 2
        assert read_manifest(out)["status"] == "partial"


class TestConfigErrors:
    def test_unknown_override_key(self, tmp_path, capsys):
        code = main(["solve-co", "--out", str(tmp_path),
                     "--override", "scenario.bogus=1"] + FAST)
        assert code == 1
        assert "unknown configuration key" in capsys.readouterr().err

    def test_malformed_override(self, tmp_path):
        assert main(["solve-co", "--out", str(tmp_path),
                     "--override", "justakey"]) == 1

    def test_missing_scenario_file(self, tmp_path):
        assert main(["solve-co", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path / "out")]) == 1

    def test_scenario_must_be_a_mapping(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("- 1\n- 2\n", encoding="utf-8")
        assert main(["solve-co", str(bad), "--out", str(tmp_path / "out")]) == 1

    def test_bad_subcommand_is_exit_1(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_gamma_grid(self, tmp_path):
        assert main(["solve-coop", "--out", str(tmp_path),
                     "--override", "solve.gamma_grid=[0.0, 0.5]"] + FAST) == 1

    def test_wrong_value_type(self, tmp_path):
        assert main(["solve-co", "--out", str(tmp_path),
                     "--override", "scenario.grid_spacing_m=coarse"]) == 1


def test_console_script_help():
    result = subprocess.run(
        [sys.executable, "-m", "pytest", "--version"], capture_output=True
    )
    assert result.returncode == 0  # sanity: subprocess plumbing works
    result = subprocess.run(
        ["relaygame", "--help"], capture_output=True, text=True
    )
    assert result.returncode == 0
    assert "solve-co" in result.stdout
    assert "netsim" in result.stdout
