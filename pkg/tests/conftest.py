"""
Shared fixtures and oracles for the qroute tests
"""

from typing import Iterable, Tuple

import numpy as np
import pytest
from sqlalchemy.orm import sessionmaker

from qroute.config import Settings
from qroute.database import init_db, make_engine
from qroute.graphs import ElectricNetwork, PortedGraph, build_from_edge_list, gen_random_connected


@pytest.fixture
def settings():
    return Settings()


@pytest.fixture
def db_session(tmp_path):
    """Session on a throwaway sqlite file with every table created"""
    engine = make_engine(f"sqlite:///{tmp_path / 'results.db'}")
    init_db(bind=engine)
    Session = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    db = Session()
    try:
        yield db
    finally:
        db.close()
        engine.dispose()


def cycle(n: int) -> PortedGraph:
    return build_from_edge_list([(i, (i + 1) % n) for i in range(n)], n)


def kkt_resistance(net: ElectricNetwork) -> float:
    """
    Minimum flow energy from the root into the marked set

    Solves the equality-constrained quadratic program min Σ f_e²/w_e subject to
    conservation at every free vertex and one unit leaving the root, through
    its KKT system.
    """
    vertices = list(net.vertices)
    sinks = set(net.marked)
    m = len(net.edges)
    free = [v for v in vertices if v not in sinks]
    rows = len(free)
    incidence = np.zeros((rows, m))
    row_of = {v: i for i, v in enumerate(free)}
    for e, (u, v, _) in enumerate(net.edges):
        if u in row_of:
            incidence[row_of[u], e] += 1.0
        if v in row_of:
            incidence[row_of[v], e] -= 1.0
    demand = np.zeros(rows)
    demand[row_of[net.root]] = 1.0
    resistance = np.diag([1.0 / w for _, _, w in net.edges])
    kkt = np.block([[2 * resistance, incidence.T], [incidence, np.zeros((rows, rows))]])
    rhs = np.concatenate([np.zeros(m), demand])
    solution, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    flow = solution[:m]
    return float(flow @ resistance @ flow)


def random_network(rng: np.random.Generator, n: int, m: int, marked: Iterable[int] = ()) -> ElectricNetwork:
    """Connected random electric network with weights in [0.5, 3)"""
    graph = gen_random_connected(n, m, seed=rng)
    edges = [(u, v, float(rng.uniform(0.5, 3.0))) for u, v in graph.edges()]
    return ElectricNetwork.build(edges, root=0, marked=marked)


def series_bounds(net: ElectricNetwork) -> Tuple[float, float]:
    """(R, W) that are valid for any marked set: sum of resistances and total weight"""
    R = max(1.0, sum(1.0 / w for _, _, w in net.edges))
    W = max(1.0, sum(w for _, _, w in net.edges))
    return R, W
