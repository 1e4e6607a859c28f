"""
Tests for the qroute command line
"""

import csv
import json

import pytest
from sqlalchemy.orm import sessionmaker

from qroute import cli
from qroute.cli import EXIT_BUDGET, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, fit_slope, main
from qroute.database import init_db, make_engine
from qroute.graphio import read_graph

RANDOM = ["--gen", "random", "n=12", "m=20", "weighted=1", "seed=1"]


def run_json(capsys, argv):
    code = main(argv)
    return code, json.loads(capsys.readouterr().out)


class TestValidate:
    def test_generated_graph(self, capsys):
        code, payload = run_json(capsys, ["validate", "--gen", "path", "n=4"])
        assert code == EXIT_OK
        assert payload["violations"] == []
        assert len(payload["graph_hash"]) == 64

    def test_malformed_file(self, tmp_path, capsys):
        path = tmp_path / "bad.txt"
        path.write_text("3 2 0\n0 1\n1 1\n")
        code, payload = run_json(capsys, ["validate", "--graph", str(path)])
        assert code == EXIT_VIOLATION
        assert "self-loop" in payload["violations"][0]

    def test_missing_graph(self):
        assert main(["validate"]) == EXIT_USAGE


class TestParser:
    def test_help(self):
        assert main(["--help"]) == EXIT_OK

    @pytest.mark.parametrize("argv", [[], ["explode"], ["run", "nope", "--gen", "path", "n=3"]])
    def test_bad_invocations(self, argv):
        assert main(argv) == EXIT_USAGE


class TestEffres:
    def test_series_path(self, capsys):
        code, payload = run_json(capsys, ["effres", "--gen", "path", "n=4", "--marked", "3"])
        assert code == EXIT_OK
        assert payload["effective_resistance"] == pytest.approx(3.0)


class TestRun:
    """Single runs with their outputs and exit codes"""

    def test_out_directory_is_deterministic(self, tmp_path, capsys):
        argv = ["run", "mst", *RANDOM, "--fidelity", "cost", "--seed", "4"]
        assert main([*argv, "--out", str(tmp_path / "a")]) == EXIT_OK
        assert main([*argv, "--out", str(tmp_path / "b")]) == EXIT_OK
        capsys.readouterr()
        for name in ("result.json", "ledger.json", "manifest.json"):
            first = (tmp_path / "a" / name).read_text()
            assert first == (tmp_path / "b" / name).read_text()
            assert "graph_hash" in json.loads(first)
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert manifest["status"] == "ok"
        assert manifest["fidelity"] == "cost-model"
        assert manifest["run_id"].startswith("mst-")
        ledger = json.loads((tmp_path / "a" / "ledger.json").read_text())["ledger"]
        assert ledger["messages"]["total"] == sum(ledger["messages"][k] for k in ("classical", "walk", "grover"))

    @pytest.mark.parametrize("argv", [
        ["run", "le", "--gen", "two-cliques", "n=4", "--fidelity", "cost"],
        ["run", "broadcast", *RANDOM, "--fidelity", "cost", "--root", "3"],
        ["run", "bfs", "--gen", "grid", "rows=3", "cols=4", "--fidelity", "cost"],
        ["run", "cover", "--gen", "grid", "rows=4", "cols=4", "--kappa", "2", "--fidelity", "cost"],
        ["run", "findany", "--gen", "path", "n=8", "--clusters", "halves", "--fidelity", "cost", "--audit"],
        ["run", "findmin", *RANDOM, "--fidelity", "cost"],
        ["run", "walk-detect", "--gen", "path", "n=4", "--marked", "3", "--fidelity", "exact"],
    ])
    def test_algorithms_pass_their_audits(self, capsys, argv):
        code, payload = run_json(capsys, argv)
        assert code == EXIT_OK, payload["violations"]
        assert payload["status"] == "ok"

    def test_json_and_csv_outputs(self, tmp_path, capsys):
        json_path, csv_path = tmp_path / "run.json", tmp_path / "run.csv"
        code, printed = run_json(capsys, ["run", "le", "--gen", "path", "n=5", "weighted=1", "--fidelity", "cost",
                                          "--json", str(json_path), "--csv", str(csv_path)])
        assert code == EXIT_OK
        assert json.loads(json_path.read_text()) == printed
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "# qroute-sweep/2"
        [row] = list(csv.DictReader(lines[1:]))
        assert row["run_id"] == printed["run_id"]
        assert row["graph_hash"] == printed["graph_hash"]
        assert json.loads(row["config"]) == printed["config"]
        assert int(row["total"]) == printed["ledger"]["messages"]["total"]

    def test_walk_detect_verdicts(self, capsys):
        _, payload = run_json(capsys, ["run", "walk-detect", "--gen", "path", "n=4", "--fidelity", "exact"])
        assert payload["result"]["verdict"] == "empty"

    def test_rounds_cap(self):
        assert main(["run", "mst", *RANDOM, "--fidelity", "cost", "--rounds-cap", "1"]) == EXIT_BUDGET

    @pytest.mark.parametrize("extra", [["--set", "no_such=1"], ["--set", "walk_c1=0.1"], ["--set", "walk_c1"],
                                       ["--root", "99"]])
    def test_usage_errors(self, extra):
        assert main(["run", "bfs", "--gen", "path", "n=5", "--fidelity", "cost", *extra]) == EXIT_USAGE

    def test_disconnected_bfs_is_an_error(self):
        assert main(["run", "bfs", "--gen", "two-cliques", "n=3", "--fidelity", "cost"]) == EXIT_VIOLATION


class TestSweep:
    def test_csv_and_summary(self, tmp_path, capsys):
        csv_path, summary_path = tmp_path / "sweep.csv", tmp_path / "summary.json"
        code = main(["sweep", "mst", "--n", "8,12", "--m-rule", "linear", "--reps", "2",
                     "--csv", str(csv_path), "--summary", str(summary_path)])
        assert code == EXIT_OK
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "# qroute-sweep/2"
        assert lines[1].split(",") == cli.CSV_FIELDS
        run_ids = [line.split(",")[0] for line in lines[2:]]
        assert run_ids == sorted(run_ids)
        assert run_ids[0] == "mst-n00008-m0000016-r000"
        summary = json.loads(summary_path.read_text())
        assert summary["runs"] == 4
        assert summary["slope_vs_n"]["points"] == 4

    def test_csv_rows_carry_config_and_graph_hash(self, tmp_path, capsys):
        csv_path = tmp_path / "sweep.csv"
        assert main(["sweep", "le", "--n", "6", "--m-rule", "linear", "--seed", "2", "--csv", str(csv_path)]) == EXIT_OK
        capsys.readouterr()
        rows = list(csv.DictReader(csv_path.read_text().splitlines()[1:]))
        assert len(rows) == 1
        config = json.loads(rows[0]["config"])
        assert config["algorithm"] == "le"
        assert config["graph"] == "gen random n=6 m=12"
        assert config["fidelity"] == "cost"
        assert len(rows[0]["graph_hash"]) == 64

    @pytest.mark.parametrize("extra", [["--n", ""], ["--n", "8", "--reps", "0"], []])
    def test_empty_grid(self, extra):
        assert main(["sweep", "mst", *extra]) == EXIT_USAGE

    def test_fit_slope(self):
        fit = fit_slope([2, 4, 8, 16], [4, 16, 64, 256])
        assert fit["slope"] == pytest.approx(2.0)
        assert fit["ci_low"] <= fit["slope"] <= fit["ci_high"]
        assert fit_slope([3, 3], [1, 2]) is None


class TestLowerBound:
    def test_connectivity_with_audit(self, tmp_path, capsys):
        out = tmp_path / "lb.json"
        code, payload = run_json(capsys, ["lb", "connectivity", "n=4", "--audit", "--out", str(out)])
        assert code == EXIT_OK
        assert payload["relation"]["m_lower"] == 256
        assert payload["relation"]["bound"] == pytest.approx(4.0)
        assert payload["relation"]["extras"]["distinct_encodings"] == 72
        assert payload["separation"]["unbridged_components"] == 2
        assert json.loads(out.read_text()) == payload

    def test_bfs(self, capsys):
        code, payload = run_json(capsys, ["lb", "bfs", "n=4", "d=2", "perm_seed=3"])
        assert code == EXIT_OK
        assert payload["relation"]["extras"]["theta_witness"] == 1.0

    @pytest.mark.parametrize("argv", [["lb", "bfs", "n=4"], ["lb", "connectivity", "n=4", "d=2"],
                                      ["lb", "connectivity", "n=four"], ["lb", "connectivity", "n"]])
    def test_bad_parameters(self, argv):
        assert main(argv) == EXIT_USAGE

    def test_budget(self):
        assert main(["lb", "connectivity", "n=3", "--set", "lb_pair_budget=5"]) == EXIT_BUDGET


class TestGen:
    def test_writes_a_readable_file(self, tmp_path, capsys):
        out = tmp_path / "grid.txt"
        code, payload = run_json(capsys, ["gen", "grid", "rows=2", "cols=3", "--out", str(out)])
        assert code == EXIT_OK
        assert read_graph(out).m == payload["m"] == 7

    def test_shuffled_ports_keep_their_hash(self, tmp_path, capsys):
        out = tmp_path / "hard.txt"
        _, generated = run_json(capsys, ["gen", "bfs-hard", "n=6", "d=3", "perm_seed=7", "--out", str(out)])
        _, checked = run_json(capsys, ["validate", "--graph", str(out)])
        assert checked["graph_hash"] == generated["graph_hash"]
        assert checked["violations"] == []

    def test_unknown_generator(self, tmp_path):
        assert main(["gen", "torus", "n=3", "--out", str(tmp_path / "x.txt")]) == EXIT_USAGE


class TestRecord:
    """--record and history against a throwaway database"""

    @pytest.fixture
    def results_db(self, tmp_path, monkeypatch):
        engine = make_engine(f"sqlite:///{tmp_path / 'results.db'}")
        monkeypatch.setattr(cli, "SessionLocal", sessionmaker(autocommit=False, autoflush=False, bind=engine))
        monkeypatch.setattr(cli, "init_db", lambda: init_db(bind=engine))
        yield engine
        engine.dispose()

    def test_run_then_history(self, results_db, capsys):
        assert main(["run", "mst", *RANDOM, "--fidelity", "cost", "--record"]) == EXIT_OK
        capsys.readouterr()
        code, rows = run_json(capsys, ["history", "--algorithm", "mst"])
        assert code == EXIT_OK
        assert len(rows) == 1
        assert rows[0]["status"] == "ok"

    def test_sweep_history(self, results_db, tmp_path, capsys):
        assert main(["sweep", "le", "--n", "6,8", "--m-rule", "linear", "--record",
                     "--csv", str(tmp_path / "s.csv")]) == EXIT_OK
        capsys.readouterr()
        _, rows = run_json(capsys, ["history", "--sweep", "le-linear-s0"])
        assert [r["run_id"] for r in rows] == ["le-n00006-m0000012-r000", "le-n00008-m0000016-r000"]

    def test_lb_record(self, results_db, capsys):
        assert main(["lb", "connectivity", "n=3", "--record"]) == EXIT_OK
