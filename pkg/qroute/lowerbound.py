"""
Lower-bound lab for qroute
Adjacency-array query oracle, replay of protocol transcripts as queries, and
exact enumeration of adversary-bound parameters on the hard instance families.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Optional, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel

from .config import Settings, get_settings
from .errors import BudgetRefusal, GraphError, LeakError, ProtocolError
from .graphs import (
    PortedGraph, bfs_hard_layout, bridge_cliques, gen_bfs_hard_instance, gen_two_cliques_crossed,
    to_networkx,
)
from .ledger import Category, MessageLedger
from .simulator import Transcript

log = logging.getLogger(__name__)

Query = Tuple[int, int]


# ==================== ORACLE ====================

@dataclass
class QueryOracle:
    """
    Adjacency-array access to a hidden graph.

    Degrees are public; query (v, p) answers (u, q) with u = f_v(p) and
    f_u(q) = v, and costs one query.
    """
    hidden: PortedGraph
    trace: bool = False
    counter: int = 0
    log: List[Query] = field(default_factory=list)

    @property
    def degrees(self) -> List[int]:
        return self.hidden.degrees

    def query(self, v: int, p: int) -> Tuple[int, int]:
        return self.query_repeated(v, p, 1)

    def query_repeated(self, v: int, p: int, times: int) -> Tuple[int, int]:
        """Issue the same query times times; the answer never changes"""
        if not 0 <= v < self.hidden.n:
            raise ProtocolError(f"node {v} is not in a {self.hidden.n}-node graph")
        degree = self.hidden.degree(v)
        if not 1 <= p <= degree:
            raise ProtocolError(f"query ({v}, {p}) is out of range: node {v} has degree {degree}")
        self.counter += times
        if self.trace:
            self.log.extend([(v, p)] * times)
        return self.hidden.neighbor(v, p), self.hidden.reverse_port(v, p)


def query_table(graph: PortedGraph) -> Dict[Query, Tuple[int, int]]:
    """Answer of every possible query"""
    return {
        (v, p): (graph.neighbor(v, p), graph.reverse_port(v, p))
        for v in range(graph.n) for p in range(1, graph.degree(v) + 1)
    }


def query_diff(g1: PortedGraph, g2: PortedGraph) -> List[Query]:
    """Queries answered differently by two encodings with the same degrees"""
    if g1.degrees != g2.degrees:
        raise GraphError("encodings with different degree sequences are not comparable")
    t1, t2 = query_table(g1), query_table(g2)
    return sorted(i for i in t1 if t1[i] != t2[i])


def reduce_protocol_to_queries(graph: PortedGraph, transcript: Transcript,
                               ledger: Optional[MessageLedger] = None, trace: bool = False) -> int:
    """
    Replay a run as queries, one modified query per charged message

    Classical sends must match the oracle's answer; quantum charges have no
    single port and are replayed through port 1 of the charging node.

    Returns:
        int: number of queries issued

    Raises:
        LeakError: a message used a port or reached a node the structure
            does not give it, or the count differs from the ledger
        ProtocolError: the transcript dropped events
    """
    if not transcript.complete:
        raise ProtocolError("transcript evicted events; rerun with the full transcript retained")
    oracle = QueryOracle(graph, trace=trace)
    for event in transcript:
        port = event.port
        if port is None:
            if Category(event.category) is Category.CLASSICAL:
                raise LeakError(f"classical message from node {event.sender} names no port")
            port = 1
        if not 1 <= port <= graph.degree(event.sender):
            errmsg = f"round {event.round}: node {event.sender} used port {port} beyond its degree"
            log.error(errmsg)
            raise LeakError(errmsg)
        u, _ = oracle.query_repeated(event.sender, port, event.count)
        if event.receiver is not None and u != event.receiver:
            errmsg = (f"round {event.round}: message from node {event.sender} through port {port} "
                      f"reached {event.receiver}, the oracle answers {u}")
            log.error(errmsg)
            raise LeakError(errmsg)
    if ledger is not None and oracle.counter != ledger.total():
        errmsg = f"replay issued {oracle.counter} queries for {ledger.total()} messages"
        log.error(errmsg)
        raise LeakError(errmsg)
    return oracle.counter


# ==================== ADVERSARY PARAMETERS ====================

class RelationParams(BaseModel):
    family: str
    params: Dict[str, int]
    m_lower: int
    m_prime: int
    l_max: int
    bound: float
    extras: Dict[str, float] = {}


@dataclass(frozen=True)
class _Encoding:
    """Answers of every query as flat arrays over a fixed query index"""
    key: bytes
    answers: np.ndarray  # (queries, 2): neighbor and reverse port


class _QueryIndex:
    """Flat numbering of the queries (v, p) of a fixed degree sequence"""

    def __init__(self, degrees: List[int]):
        self.offsets = np.concatenate([[0], np.cumsum(degrees)]).astype(np.int64)
        self.size = int(self.offsets[-1])

    def flat(self, v: int, p: int) -> int:
        return int(self.offsets[v]) + p - 1

    def encode(self, graph: PortedGraph) -> _Encoding:
        answers = np.empty((self.size, 2), dtype=np.int64)
        for v in range(graph.n):
            lo, hi = self.offsets[v], self.offsets[v + 1]
            answers[lo:hi, 0] = graph.port_map[v]
            answers[lo:hi, 1] = graph.inverse_port[v]
        return _Encoding(key=answers.tobytes(), answers=answers)


def _diff(x: _Encoding, y: _Encoding) -> np.ndarray:
    return np.flatnonzero((x.answers != y.answers).any(axis=1))


def adversary_parameters(pairs: Iterable[Tuple[Hashable, Hashable, np.ndarray]]) -> Tuple[int, int, int]:
    """
    (m, m', l_max) of a relation given as (x, y, differing queries) triples

    m is the smallest number of partners of an x, m' of a y; l_max is the
    largest l_{x,i}·l_{y,i} over related pairs and queries i where they differ.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("relation is empty")
    partners_x: Counter = Counter()
    partners_y: Counter = Counter()
    l_x: Counter = Counter()
    l_y: Counter = Counter()
    for x, y, diff in pairs:
        partners_x[x] += 1
        partners_y[y] += 1
        for i in diff.tolist():
            l_x[x, i] += 1
            l_y[y, i] += 1
    l_max = max(l_x[x, i] * l_y[y, i] for x, y, diff in pairs for i in diff.tolist())
    return min(partners_x.values()), min(partners_y.values()), l_max


def _check_budget(pairs: int, settings: Settings, what: str) -> None:
    if pairs > settings.lb_pair_budget:
        errmsg = f"{what} needs {pairs} pair evaluations, budget is {settings.lb_pair_budget}"
        log.error(errmsg)
        raise BudgetRefusal(errmsg, budget=settings.lb_pair_budget, requested=pairs)


# ==================== CONNECTIVITY FAMILY ====================

def bridge_tuples(n: int, distinct: bool = True) -> List[Tuple[int, int, int, int]]:
    """
    Bridge choices (a, b, c, d) with a, b in the first clique and c, d in the second

    With distinct, degenerate tuples are dropped and (a, b, c, d) ~ (b, a, d, c)
    is kept once (both describe the same encoding).
    """
    first, second = range(n), range(n, 2 * n)
    out = []
    for a in first:
        for b in first:
            for c in second:
                for d in second:
                    if distinct and (a >= b or c == d):
                        continue
                    out.append((a, b, c, d))
    return out


def connectivity_relation_params(n: int, settings: Optional[Settings] = None) -> RelationParams:
    """
    Adversary parameters for telling two cliques from a bridged pair

    X holds the single unbridged encoding and Y one instance per ordered
    tuple (a, b, c, d), so m = n^4, m' = 1 and l_{y,i} = 1. Each query of x
    changes under at most n^2 tuples, giving l_max = n^2 and bound n. The
    enumeration over distinct bridged encodings checks that per-query limit
    and its own (m, l_max, bound) are kept in extras.
    """
    settings = settings or get_settings()
    if n < 2:
        raise GraphError(f"connectivity family needs n >= 2, got {n}")
    tuples = bridge_tuples(n)
    _check_budget(len(tuples), settings, f"connectivity relation for n={n}")

    base = gen_two_cliques_crossed(n)
    index = _QueryIndex(base.degrees)
    x = index.encode(base)
    seen = set()
    triples = []
    for a, b, c, d in tuples:
        y = index.encode(bridge_cliques(base, a, b, c, d))
        if y.key in seen:
            continue
        seen.add(y.key)
        triples.append((x.key, y.key, _diff(x, y)))
    distinct_m, m_prime, distinct_l_max = adversary_parameters(triples)
    per_query = Counter(i for _, _, diff in triples for i in diff.tolist())

    m_lower, l_max = n ** 4, n * n
    return RelationParams(
        family="connectivity", params={"n": n},
        m_lower=m_lower, m_prime=m_prime, l_max=l_max,
        bound=math.sqrt(m_lower * m_prime / l_max),
        extras={
            "nondegenerate_count": n * n * (n - 1) ** 2,
            "max_l_x": max(per_query.values()),
            "l_x_limit": l_max,
            "distinct_encodings": distinct_m,
            "distinct_l_max": distinct_l_max,
            "bound_distinct": math.sqrt(distinct_m * m_prime / distinct_l_max),
            "differing_queries": max(len(diff) for _, _, diff in triples),
        },
    )


def connectivity_separation(n: int) -> Dict[str, int]:
    """
    Connectivity and diameter audit of the connectivity family

    Returns counts of bridged encodings that are connected with diameter 3
    and the number of components of the unbridged graph.
    """
    components = nx.number_connected_components(to_networkx(gen_two_cliques_crossed(n)))
    base = gen_two_cliques_crossed(n)
    good = total = 0
    for a, b, c, d in bridge_tuples(n):
        g = to_networkx(bridge_cliques(base, a, b, c, d))
        total += 1
        if nx.is_connected(g) and nx.diameter(g) == 3:
            good += 1
    return {"unbridged_components": components, "bridged": total, "bridged_diameter_3": good}


# ==================== BFS FAMILY ====================

def _swap_ports(answers: np.ndarray, index: _QueryIndex, v: int, p: int, q: int) -> None:
    """Exchange what ports p and q of v lead to, fixing the reverse answers"""
    fp, fq = index.flat(v, p), index.flat(v, q)
    (u1, r1), (u2, r2) = answers[fp].tolist(), answers[fq].tolist()
    answers[fp], answers[fq] = (u2, r2), (u1, r1)
    answers[index.flat(u2, r2)] = (v, p)
    answers[index.flat(u1, r1)] = (v, q)


def _port_of(answers: np.ndarray, index: _QueryIndex, v: int, u: int) -> int:
    lo, hi = index.offsets[v], index.offsets[v + 1]
    return int(np.flatnonzero(answers[lo:hi, 0] == u)[0]) + 1


def _bfs_moves(enc: _Encoding, index: _QueryIndex, n: int, d: int) -> Iterable[_Encoding]:
    """
    Every encoding one move away

    A move picks a in A, b in B and a C-neighbor c' of the matched node c of
    a; it swaps a's ports to b and c, then c's ports to a and c'. Edges never
    change, so matched partners and C-neighbors are read off the fixed layout.
    """
    layout = bfs_hard_layout(n, d)
    c_of = dict(zip(layout.a_nodes, layout.c_nodes))
    c_set = set(layout.c_nodes)
    for a in layout.a_nodes:
        c = c_of[a]
        lo, hi = index.offsets[c], index.offsets[c + 1]
        c_neighbors = sorted(u for u in enc.answers[lo:hi, 0].tolist() if u in c_set)
        for b in layout.b_nodes:
            for c2 in c_neighbors:
                answers = enc.answers.copy()
                _swap_ports(answers, index, a, _port_of(answers, index, a, b), _port_of(answers, index, a, c))
                _swap_ports(answers, index, c, _port_of(answers, index, c, a), _port_of(answers, index, c, c2))
                yield _Encoding(key=answers.tobytes(), answers=answers)


def bfs_relation_params(n: int, d: int, perm_seed: int = 0,
                        settings: Optional[Settings] = None) -> RelationParams:
    """
    Adversary parameters of the three-level BFS family

    Pairs differ by one move (see _bfs_moves). Counts depend only on the
    edge structure, not on the port order, so enumerating every pair at one
    base encoding together with every move out of each partner gives the
    exact values. Reports m = m' = n d^2 witness constant m/(n d^2).
    """
    settings = settings or get_settings()
    graph, _ = gen_bfs_hard_instance(n, d, perm_seed)
    moves = n * d * d
    _check_budget(moves * (moves + 1), settings, f"bfs relation for n={n}, d={d}")

    index = _QueryIndex(graph.degrees)
    x = index.encode(graph)
    partners = {y.key: y for y in _bfs_moves(x, index, n, d)}
    triples = [(x.key, key, _diff(x, y)) for key, y in partners.items()]
    # partners of every y, so that l_{y,i} and m' are exact
    for key, y in partners.items():
        for z in _bfs_moves(y, index, n, d):
            if z.key != x.key:
                triples.append((z.key, key, _diff(z, y)))
    m_lower = len(partners)
    _, m_prime, _ = adversary_parameters(triples)
    l_max = _l_max_at(x.key, triples)

    return RelationParams(
        family="bfs", params={"n": n, "d": d},
        m_lower=m_lower, m_prime=m_prime, l_max=l_max,
        bound=math.sqrt(m_lower * m_prime / l_max),
        extras={
            "theta_witness": m_lower / (n * d * d),
            "l_max_limit": d ** 3,
            "differing_queries": max(len(diff) for xk, _, diff in triples if xk == x.key),
        },
    )


def _l_max_at(x_key: bytes, triples: List[Tuple[bytes, bytes, np.ndarray]]) -> int:
    """l_max over the pairs of x only, with l_{y,i} counted over all partners of y"""
    l_x: Counter = Counter()
    l_y: Counter = Counter()
    for x, y, diff in triples:
        for i in diff.tolist():
            l_y[y, i] += 1
            if x == x_key:
                l_x[i] += 1
    return max(l_x[i] * l_y[y, i] for x, y, diff in triples if x == x_key for i in diff.tolist())
