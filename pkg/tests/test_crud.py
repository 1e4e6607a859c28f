"""
Tests for the results store
"""

from qroute import crud
from qroute.crud import LedgerExport, MessageCounts, PhaseExport, RunConfig, RunResponse, SweepResponse


def export(run_id, algorithm="mst", total=10):
    return LedgerExport(
        run_id=run_id, seed=1, n=8, m=12, algorithm=algorithm, rounds=5,
        messages=MessageCounts(classical=total, walk=0, grover=0, total=total),
        phases=[PhaseExport(name="mst/phase-1", classical=total, total=total, rounds=5)],
    )


class TestRuns:
    def test_save_and_read_back(self, db_session):
        config = RunConfig(algorithm="mst", graph="gen path n=8", seed=1)
        saved = crud.save_run(db_session, export("mst-a"), "cost-model", "ab" * 32, config)
        row = crud.get_run(db_session, "mst-a")
        assert row.id == saved.id
        assert row.config["graph"] == "gen path n=8"
        assert row.phases[0]["name"] == "mst/phase-1"
        response = RunResponse.model_validate(row)
        assert (response.total, response.status, response.fidelity) == (10, "ok", "cost-model")

    def test_list_runs_newest_first(self, db_session):
        for i, alg in enumerate(["mst", "bfs", "mst"]):
            crud.save_run(db_session, export(f"run-{i}", alg), "exact", "0" * 64)
        assert [r.run_id for r in crud.list_runs(db_session)] == ["run-2", "run-1", "run-0"]
        assert [r.run_id for r in crud.list_runs(db_session, algorithm="mst")] == ["run-2", "run-0"]
        assert len(crud.list_runs(db_session, limit=1)) == 1

    def test_missing_run(self, db_session):
        assert crud.get_run(db_session, "nope") is None


class TestSweeps:
    def test_runs_attach_to_sweep(self, db_session):
        sweep = crud.save_sweep(db_session, "sw-1", "mst", {"n": [8, 16]})
        for run_id in ["b", "a"]:
            crud.save_run(db_session, export(run_id), "cost-model", "1" * 64, sweep=sweep)
        assert [r.run_id for r in crud.runs_for_sweep(db_session, "sw-1")] == ["a", "b"]
        assert crud.runs_for_sweep(db_session, "missing") == []

    def test_summary_update_keeps_one_row(self, db_session):
        first = crud.save_sweep(db_session, "sw-2", "bfs", {"n": [8]})
        again = crud.save_sweep(db_session, "sw-2", "bfs", {"n": [8]}, summary={"slope": 1.5})
        assert first.id == again.id
        assert SweepResponse.model_validate(again).summary == {"slope": 1.5}


class TestRelations:
    def test_save_relation(self, db_session):
        row = crud.save_relation(db_session, "connectivity", {"n": 5}, 625, 1, 25, 5.0,
                                 extras={"distinct_encodings": 200})
        assert row.id is not None
        assert row.extras["distinct_encodings"] == 200


class TestExportRows:
    def test_csv_row_matches_fields(self):
        cfg = RunConfig(algorithm="mst", graph="gen path n=3", seed=4)
        row = export("x").csv_row("ab" * 32, cfg)
        assert len(row) == len(crud.CSV_FIELDS)
        assert row[0] == "x"
        assert row[crud.CSV_FIELDS.index("total")] == 10
        assert row[-2] == "ab" * 32
        assert RunConfig.model_validate_json(row[-1]) == cfg
