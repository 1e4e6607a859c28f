from datetime import datetime

from sqlalchemy import JSON, Column, DateTime, Float, ForeignKey, Integer, String
from sqlalchemy.orm import relationship

from .database import Base


class SweepRecord(Base):
    """Sweeps table - one row per scaling sweep"""
    __tablename__ = "sweeps"

    id = Column(Integer, primary_key=True, index=True)
    sweep_id = Column(String(64), unique=True, index=True)
    algorithm = Column(String(32), index=True)
    grid = Column(JSON)
    summary = Column(JSON, nullable=True)  # slope, CI, r^2
    created_at = Column(DateTime, default=datetime.utcnow)

    # Relationships
    runs = relationship("RunRecord", back_populates="sweep", cascade="all, delete-orphan")


class RunRecord(Base):
    """Runs table - one row per algorithm run with its ledger totals"""
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(String(64), unique=True, index=True)
    sweep_id = Column(Integer, ForeignKey("sweeps.id"), nullable=True, index=True)
    algorithm = Column(String(32), index=True)
    seed = Column(Integer)
    n = Column(Integer)
    m = Column(Integer)
    fidelity = Column(String(16))  # exact, cost-model
    graph_hash = Column(String(64), index=True)
    rounds = Column(Integer)
    classical = Column(Integer, default=0)
    walk = Column(Integer, default=0)
    grover = Column(Integer, default=0)
    total = Column(Integer, default=0)
    status = Column(String(20), default="ok")  # ok, violation, refused
    config = Column(JSON, nullable=True)
    phases = Column(JSON, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)

    # Relationships
    sweep = relationship("SweepRecord", back_populates="runs")


class RelationRecord(Base):
    """Relations table - lower-bound relation parameters"""
    __tablename__ = "relations"

    id = Column(Integer, primary_key=True, index=True)
    family = Column(String(32), index=True)  # bfs, connectivity
    params = Column(JSON)
    m_lower = Column(Integer)
    m_prime = Column(Integer)
    l_max = Column(Integer)
    bound = Column(Float)
    extras = Column(JSON, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)
