import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from sktr.cli import main

from .conftest import DATA_DIR

MODEL = str(DATA_DIR / "two_branch_model.pnml")
TRACE_CSV = str(DATA_DIR / "uncertain_trace.csv")
TRACE_JSON = str(DATA_DIR / "uncertain_trace.json")
XES = str(DATA_DIR / "small_log.xes")
DEAD_MODEL = str(DATA_DIR / "unreachable_final.pnml")


@pytest.fixture
def runner():
    return CliRunner()


class TestRecover:
    def test_exponential_cost(self, runner):
        result = runner.invoke(main, ["recover", "--model", MODEL, "--log", TRACE_CSV,
                                      "--cost", "exp"])
        assert result.exit_code == 0, result.output
        assert result.output.strip() == "B C E"

    def test_logarithmic_cost(self, runner):
        result = runner.invoke(main, ["recover", "--model", MODEL, "--log", TRACE_CSV,
                                      "--cost", "log", "--c", "2.4"])
        assert result.exit_code == 0, result.output
        assert result.output.strip() == "A D F"

    def test_argmax_method(self, runner):
        result = runner.invoke(main, ["recover", "--model", MODEL, "--log", TRACE_CSV,
                                      "--method", "argmax"])
        assert result.exit_code == 0, result.output
        assert result.output.strip() == "A C E"

    def test_json_log_input(self, runner):
        result = runner.invoke(main, ["recover", "--model", MODEL, "--log", TRACE_JSON])
        assert result.exit_code == 0, result.output
        assert result.output.strip() == "B C E"

    def test_writes_output_files(self, runner, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(main, ["recover", "--model", MODEL, "--log", TRACE_CSV,
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "recovered.csv").exists()
        payload = json.loads((out / "recover.json").read_text())
        assert payload["config"]["cost"] == "exp"
        (record,) = payload["traces"]
        assert record["recovered"] == ["B", "C", "E"]
        assert record["cost"] == pytest.approx(1.8168, abs=1e-3)

    def test_validation_failure_exits_2(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("case_id,event_id,distribution,timestamp\n1,e1,A:0.9,\n")
        result = runner.invoke(main, ["recover", "--model", MODEL, "--log", str(bad)])
        assert result.exit_code == 2
        assert "sum" in result.output

    def test_infeasible_alignment_exits_3(self, runner):
        result = runner.invoke(main, ["recover", "--model", DEAD_MODEL, "--log", TRACE_CSV])
        assert result.exit_code == 3

    def test_resource_cap_exits_4(self, runner):
        result = runner.invoke(main, ["recover", "--model", MODEL, "--log", TRACE_CSV,
                                      "--max-states", "1"])
        assert result.exit_code == 4

    def test_parallel_jobs_match_serial_output(self, runner, tmp_path):
        log = tmp_path / "log.csv"
        rows = Path(TRACE_CSV).read_text().strip().splitlines()
        body = [rows[0]] + [
            line.replace("1,", f"{case},", 1)
            for case in ("1", "2", "3")
            for line in rows[1:]
        ]
        log.write_text("\n".join(body) + "\n")
        outputs = []
        for jobs in ("1", "2"):
            result = runner.invoke(main, ["recover", "--model", MODEL, "--log", str(log),
                                          "--jobs", jobs])
            assert result.exit_code == 0, result.output
            outputs.append(result.output)
        assert outputs[0] == outputs[1]
        assert outputs[0].splitlines() == [f"{case}\tB C E" for case in ("1", "2", "3")]


class TestAlign:
    def test_emits_move_level_json(self, runner):
        result = runner.invoke(main, ["align", "--model", MODEL, "--log", TRACE_CSV,
                                      "--cost", "exp"])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        (entry,) = payload["alignments"]
        alignment = entry["alignment"]
        assert alignment["recovered"] == ["B", "C", "E"]
        assert len(alignment["moves"]) == 3
        assert all(m["kind"] == "sync" for m in alignment["moves"])
        assert alignment["moves"][0]["cost"] > 0
        assert "states_expanded" in alignment

    def test_out_file(self, runner, tmp_path):
        out = tmp_path / "alignments.json"
        result = runner.invoke(main, ["align", "--model", MODEL, "--log", TRACE_CSV,
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert json.loads(out.read_text())["config"]["command"] == "align"


class TestInject:
    def test_writes_sk_log_and_truth(self, runner, tmp_path):
        out = tmp_path / "noise"
        result = runner.invoke(main, ["inject", "--log", XES, "--nt", "2", "--tp", "1.0",
                                      "--pa", "0.4", "--seed", "3", "--out", str(out)])
        assert result.exit_code == 0, result.output
        injected = (out / "injected.csv").read_text()
        truth = (out / "truth.csv").read_text()
        assert injected.startswith("case_id,event_id,distribution,timestamp")
        assert truth.startswith("case_id,event_id,label")
        assert len(truth.strip().splitlines()) == 1 + 5  # five events in the log
        config = json.loads((out / "inject.json").read_text())["config"]
        assert config["seed"] == 3

    def test_deterministic_given_seed(self, runner, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            runner.invoke(main, ["inject", "--log", XES, "--pa", "0.4", "--seed", "3",
                                 "--out", str(out)])
            outs.append((out / "injected.csv").read_text())
        assert outs[0] == outs[1]


class TestSweep:
    def test_writes_report_files(self, runner, tmp_path):
        out = tmp_path / "sweep"
        result = runner.invoke(main, [
            "sweep", "--model", MODEL, "--log", XES,
            "--grid", "0:1:0.5", "--methods", "exp,argmax", "--seed", "5",
            "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        rows = (out / "sweep.csv").read_text().strip().splitlines()
        assert rows[0] == "p_a,method,cost_function,accuracy,traces,events,failures"
        assert len(rows) == 1 + 3 * 2
        assert (out / "sweep.png").exists()
        payload = json.loads((out / "sweep.json").read_text())
        assert payload["metadata"]["command"] == "sweep"
        assert payload["metadata"]["grid"] == [0.0, 0.5, 1.0]

    def test_default_grid_has_21_points(self, runner, tmp_path):
        out = tmp_path / "sweep"
        result = runner.invoke(main, [
            "sweep", "--model", MODEL, "--log", XES,
            "--methods", "argmax", "--seed", "5", "--no-figure",
            "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        payload = json.loads((out / "sweep.json").read_text())
        grid = payload["metadata"]["grid"]
        assert len(grid) == 21
        assert grid[0] == 0.0 and grid[-1] == 1.0
        by_pa = {row["p_a"]: row["accuracy"] for row in payload["grid"]}
        assert by_pa[0.0] == 0.0
        assert by_pa[1.0] == 1.0

    def test_topk_pool(self, runner, tmp_path):
        out = tmp_path / "sweep"
        result = runner.invoke(main, [
            "sweep", "--model", MODEL, "--log", XES,
            "--grid", "0,1", "--methods", "argmax", "--pool", "topk", "--k", "2",
            "--no-figure", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output

    def test_bad_grid_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, [
            "sweep", "--model", MODEL, "--log", XES, "--grid", "nope",
            "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 2


class TestSubsample:
    def test_exports_xes(self, runner, tmp_path):
        out = tmp_path / "sample.xes"
        result = runner.invoke(main, ["subsample", "--log", XES, "--ts", "1",
                                      "--seed", "2", "--out", str(out)])
        assert result.exit_code == 0, result.output
        from sktr import parse_xes

        assert len(parse_xes(out.read_text())) == 1

    def test_too_many_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["subsample", "--log", XES, "--ts", "99",
                                      "--out", str(tmp_path / "s.xes")])
        assert result.exit_code == 2
