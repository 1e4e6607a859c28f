from datetime import datetime
from typing import Dict, List, Optional

from pydantic import BaseModel, Field
from sqlalchemy.orm import Session

from . import models

# CSV layout for sweep rows (schema id goes in the header comment)
CSV_SCHEMA = "qroute-sweep/2"
CSV_FIELDS = ["run_id", "seed", "n", "m", "algorithm", "rounds",
              "classical", "walk", "grover", "total", "graph_hash", "config"]


# Pydantic schemas (manifest and export validation)
class MessageCounts(BaseModel):
    classical: int = Field(ge=0)
    walk: int = Field(ge=0)
    grover: int = Field(ge=0)
    total: int = Field(ge=0)


class PhaseExport(BaseModel):
    name: str
    classical: int = 0
    walk: int = 0
    grover: int = 0
    total: int = 0
    rounds: int = 0


class LedgerExport(BaseModel):
    run_id: str
    seed: int
    n: int
    m: int
    algorithm: str
    rounds: int
    messages: MessageCounts
    phases: List[PhaseExport] = []

    def csv_row(self, graph_hash: str, config: "RunConfig") -> List[object]:
        """One CSV line; the config column is compact JSON"""
        return [self.run_id, self.seed, self.n, self.m, self.algorithm, self.rounds,
                self.messages.classical, self.messages.walk, self.messages.grover,
                self.messages.total, graph_hash, config.model_dump_json()]


class RunConfig(BaseModel):
    algorithm: str
    graph: str  # file path or "gen NAME k=v ..."
    root: int = 0
    seed: int = 0
    delta: float = 0.01
    fidelity: str = "auto"
    rounds_cap: Optional[int] = None
    overrides: Dict[str, float] = {}
    n_known: bool = True
    terminate: str = "detect"
    audit: bool = False
    kappa: Optional[int] = None
    W: int = 1
    clusters: str = "singletons"  # singletons | whole | halves
    n_star: Optional[int] = None
    marked: List[int] = []


class RunResponse(BaseModel):
    id: int
    run_id: str
    algorithm: str
    seed: int
    n: int
    m: int
    fidelity: str
    graph_hash: str
    rounds: int
    total: int
    status: str
    created_at: datetime

    class Config:
        from_attributes = True


class SweepResponse(BaseModel):
    id: int
    sweep_id: str
    algorithm: str
    grid: dict
    summary: Optional[dict] = None
    created_at: datetime

    class Config:
        from_attributes = True


# CRUD Operations
def save_sweep(db: Session, sweep_id: str, algorithm: str, grid: dict, summary: Optional[dict] = None):
    """Create a sweep row, or update the summary of an existing one"""
    sweep = db.query(models.SweepRecord).filter(models.SweepRecord.sweep_id == sweep_id).first()
    if sweep:
        sweep.summary = summary
        db.commit()
        db.refresh(sweep)
        return sweep

    db_sweep = models.SweepRecord(sweep_id=sweep_id, algorithm=algorithm, grid=grid, summary=summary)
    db.add(db_sweep)
    db.commit()
    db.refresh(db_sweep)
    return db_sweep


def save_run(db: Session, export: LedgerExport, fidelity: str, graph_hash: str,
             config: Optional[RunConfig] = None, status: str = "ok", sweep=None):
    """Store one run's ledger totals and phase breakdown"""
    db_run = models.RunRecord(
        run_id=export.run_id,
        sweep_id=sweep.id if sweep is not None else None,
        algorithm=export.algorithm,
        seed=export.seed,
        n=export.n,
        m=export.m,
        fidelity=fidelity,
        graph_hash=graph_hash,
        rounds=export.rounds,
        classical=export.messages.classical,
        walk=export.messages.walk,
        grover=export.messages.grover,
        total=export.messages.total,
        status=status,
        config=config.model_dump() if config is not None else None,
        phases=[p.model_dump() for p in export.phases],
    )
    db.add(db_run)
    db.commit()
    db.refresh(db_run)
    return db_run


def save_relation(db: Session, family: str, params: dict, m_lower: int, m_prime: int,
                  l_max: int, bound: float, extras: Optional[dict] = None):
    """Store a lower-bound relation's parameters"""
    db_relation = models.RelationRecord(
        family=family, params=params, m_lower=m_lower, m_prime=m_prime,
        l_max=l_max, bound=bound, extras=extras,
    )
    db.add(db_relation)
    db.commit()
    db.refresh(db_relation)
    return db_relation


def list_runs(db: Session, algorithm: Optional[str] = None, limit: int = 50):
    """Most recent runs first"""
    query = db.query(models.RunRecord)
    if algorithm:
        query = query.filter(models.RunRecord.algorithm == algorithm)
    return query.order_by(models.RunRecord.id.desc()).limit(limit).all()


def get_run(db: Session, run_id: str):
    return db.query(models.RunRecord).filter(models.RunRecord.run_id == run_id).first()


def runs_for_sweep(db: Session, sweep_id: str):
    """Runs of a sweep ordered by run id"""
    sweep = db.query(models.SweepRecord).filter(models.SweepRecord.sweep_id == sweep_id).first()
    if not sweep:
        return []
    return sorted(sweep.runs, key=lambda r: r.run_id)
