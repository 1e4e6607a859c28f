"""
Graph core for qroute
Ported communication graphs, electric networks, unit flows, effective
resistance and the generator families used by tests and lower bounds.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import cg

from .config import Settings, get_settings
from .errors import EmptyMarkedError, FlowError, GraphError, NetworkError, UnreachableMarkedError

log = logging.getLogger(__name__)

Edge = Tuple[int, int]
FLOW_TOLERANCE = 1e-9


def canonical(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class EdgeTable:
    """Vectorized view of a graph's edges, indexed in insertion order"""
    us: np.ndarray
    vs: np.ndarray
    weights: np.ndarray
    rank: np.ndarray
    port_edge: Tuple[np.ndarray, ...]

    @property
    def m(self) -> int:
        return len(self.us)


@dataclass(frozen=True)
class PortedGraph:
    """
    Communication graph with adjacency arrays.

    port_map[v][p-1] is the neighbor behind port p of v and inverse_port[v][p-1]
    is the port q on that neighbor leading back to v. Ports are 1-based.
    """
    n: int
    port_map: Tuple[Tuple[int, ...], ...]
    inverse_port: Tuple[Tuple[int, ...], ...]
    weights: Optional[Mapping[Edge, float]] = None
    edge_order: Tuple[Edge, ...] = field(default=(), compare=False, repr=False)

    @property
    def degrees(self) -> List[int]:
        return [len(ports) for ports in self.port_map]

    def degree(self, v: int) -> int:
        return len(self.port_map[v])

    @property
    def m(self) -> int:
        return len(self.edge_index)

    @property
    def is_weighted(self) -> bool:
        return self.weights is not None

    def neighbor(self, v: int, p: int) -> int:
        return self.port_map[v][p - 1]

    def reverse_port(self, v: int, p: int) -> int:
        return self.inverse_port[v][p - 1]

    def weight(self, u: int, v: int) -> float:
        if self.weights is None:
            return 1.0
        return self.weights[canonical(u, v)]

    def port_weight(self, v: int, p: int) -> float:
        return self.weight(v, self.neighbor(v, p))

    def port_to(self, v: int, u: int) -> int:
        """Port of v leading to u (simulator bookkeeping, never used by node logic)"""
        return self.port_map[v].index(u) + 1

    def edges(self) -> List[Edge]:
        if self.edge_order:
            return list(self.edge_order)
        return [(v, u) for v in range(self.n) for u in self.port_map[v] if v < u]

    @cached_property
    def edge_index(self) -> Dict[Edge, int]:
        return {e: i for i, e in enumerate(self.edges())}

    @cached_property
    def edge_table(self) -> EdgeTable:
        edges = self.edges()
        us = np.array([e[0] for e in edges], dtype=np.int64)
        vs = np.array([e[1] for e in edges], dtype=np.int64)
        if self.weights is None:
            ws = np.ones(len(edges), dtype=np.float64)
        else:
            ws = np.array([self.weights[e] for e in edges], dtype=np.float64)
        order = np.lexsort((np.arange(len(edges)), ws))
        rank = np.empty(len(edges), dtype=np.int64)
        rank[order] = np.arange(len(edges))
        index = self.edge_index
        port_edge = tuple(
            np.array([index[canonical(v, u)] for u in self.port_map[v]], dtype=np.int64)
            for v in range(self.n)
        )
        return EdgeTable(us=us, vs=vs, weights=ws, rank=rank, port_edge=port_edge)

    @cached_property
    def arc_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(source, target, edge index) for both directions of every edge; arc e + m reverses arc e"""
        table = self.edge_table
        edge = np.arange(table.m, dtype=np.int64)
        return (np.concatenate([table.us, table.vs]), np.concatenate([table.vs, table.us]),
                np.concatenate([edge, edge]))

    @cached_property
    def port_targets(self) -> Tuple[np.ndarray, ...]:
        """Neighbor behind each port, one array per node"""
        return tuple(np.array(ports, dtype=np.int64) for ports in self.port_map)

    def port_arcs(self, v: int) -> np.ndarray:
        """Arc index leaving v through each port, in port order"""
        table = self.edge_table
        edges = table.port_edge[v]
        return np.where(table.us[edges] == v, edges, edges + table.m)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        table = self.edge_table
        data = np.ones(2 * table.m)
        rows = np.concatenate([table.us, table.vs])
        cols = np.concatenate([table.vs, table.us])
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def distances_from(self, source: int) -> np.ndarray:
        """Hop distances from source; unreachable nodes get -1"""
        dist = csgraph.shortest_path(self.adjacency, unweighted=True, indices=source)
        return np.where(np.isinf(dist), -1, dist).astype(np.int64)

    def component_count(self) -> int:
        count, _ = csgraph.connected_components(self.adjacency, directed=False)
        return int(count)


def _checked_edges(edges: Iterable[Sequence], n: int, weight_at: int = 2):
    """Yield (u, v, key, weight) for each item, rejecting bad ids, loops, duplicates and weights"""
    seen = set()
    has_weight: Optional[bool] = None
    for item in edges:
        u, v = int(item[0]), int(item[1])
        weighted_item = len(item) > weight_at and item[weight_at] is not None
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"node id out of range in edge ({u}, {v}) for n={n}", edge=(u, v))
        if u == v:
            raise GraphError(f"self-loop at node {u}", edge=(u, v))
        key = canonical(u, v)
        if key in seen:
            raise GraphError(f"duplicate edge ({u}, {v})", edge=(u, v))
        if has_weight is None:
            has_weight = weighted_item
        elif has_weight != weighted_item:
            raise GraphError(f"edge ({u}, {v}) mixes weighted and unweighted entries", edge=(u, v))
        w = None
        if weighted_item:
            w = float(item[weight_at])
            if not (w > 0 and math.isfinite(w)):
                raise GraphError(f"edge ({u}, {v}) has non-positive weight {w}", edge=(u, v))
        seen.add(key)
        yield u, v, key, w


def build_from_edge_list(edges: Iterable[Sequence], n: int) -> PortedGraph:
    """
    Build a PortedGraph, assigning ports in input order per node

    Args:
        edges: (u, v) or (u, v, weight) items
        n: Node count

    Returns:
        PortedGraph: graph with consistent inverse ports
    """
    port_map: List[List[int]] = [[] for _ in range(n)]
    inverse: List[List[int]] = [[] for _ in range(n)]
    order: List[Edge] = []
    weights: Dict[Edge, float] = {}

    for u, v, key, w in _checked_edges(edges, n):
        if w is not None:
            weights[key] = w
        order.append(key)
        port_map[u].append(v)
        port_map[v].append(u)
        inverse[u].append(len(port_map[v]))
        inverse[v].append(len(port_map[u]))

    return PortedGraph(
        n=n,
        port_map=tuple(tuple(ports) for ports in port_map),
        inverse_port=tuple(tuple(ports) for ports in inverse),
        weights=weights or None,
        edge_order=tuple(order),
    )


def build_from_port_list(edges: Iterable[Sequence], n: int) -> PortedGraph:
    """
    Build a PortedGraph whose ports are given explicitly

    Args:
        edges: (u, v, port at u, port at v) or (u, v, pu, pv, weight) items
        n: Node count

    Raises:
        GraphError: a port slot used twice, or ports of a node that are
            not exactly 1..deg
    """
    slots: List[Dict[int, Tuple[int, int]]] = [{} for _ in range(n)]
    order: List[Edge] = []
    weights: Dict[Edge, float] = {}
    items = [tuple(item) for item in edges]
    for item, (u, v, key, w) in zip(items, _checked_edges(items, n, weight_at=4)):
        pu, pv = int(item[2]), int(item[3])
        for x, p, y, q in ((u, pu, v, pv), (v, pv, u, pu)):
            if p < 1 or p in slots[x]:
                raise GraphError(f"port {p} of node {x} is invalid or used twice", edge=(u, v))
            slots[x][p] = (y, q)
        if w is not None:
            weights[key] = w
        order.append(key)

    for x, taken in enumerate(slots):
        if sorted(taken) != list(range(1, len(taken) + 1)):
            raise GraphError(f"ports of node {x} are {sorted(taken)}, expected 1..{len(taken)}")
    return PortedGraph(
        n=n,
        port_map=tuple(tuple(taken[p][0] for p in sorted(taken)) for taken in slots),
        inverse_port=tuple(tuple(taken[p][1] for p in sorted(taken)) for taken in slots),
        weights=weights or None,
        edge_order=tuple(order),
    )


def ports_follow_edge_order(graph: PortedGraph) -> bool:
    """True when listing edges in order rebuilds exactly these ports"""
    return build_from_edge_list(graph.edges(), graph.n).port_map == graph.port_map


def validate(graph: PortedGraph) -> List[str]:
    """List every broken PortedGraph invariant (empty when the graph is sound)"""
    violations: List[str] = []
    if len(graph.port_map) != graph.n or len(graph.inverse_port) != graph.n:
        violations.append(f"shape: expected {graph.n} port arrays")
        return violations

    for v in range(graph.n):
        ports, back = graph.port_map[v], graph.inverse_port[v]
        if len(ports) != len(back):
            violations.append(f"shape: node {v} has {len(ports)} ports but {len(back)} inverse entries")
            continue
        if len(set(ports)) != len(ports):
            violations.append(f"simplicity: node {v} lists a neighbor twice")
        for p, (u, q) in enumerate(zip(ports, back), start=1):
            if u == v:
                violations.append(f"simplicity: self-loop at node {v} port {p}")
                continue
            if not 0 <= u < graph.n:
                violations.append(f"range: node {v} port {p} points to {u}")
                continue
            if not 1 <= q <= len(graph.port_map[u]) or graph.port_map[u][q - 1] != v:
                violations.append(
                    f"port symmetry: node {v} port {p} -> node {u} port {q} does not lead back"
                )
            elif graph.inverse_port[u][q - 1] != p:
                violations.append(f"port symmetry: inverse of node {u} port {q} is not {p}")

    if graph.weights is not None:
        edges = {canonical(v, u) for v in range(graph.n) for u in graph.port_map[v] if 0 <= u < graph.n}
        for (u, v), w in graph.weights.items():
            key = canonical(u, v)
            if key != (u, v) and key in graph.weights and graph.weights[key] != w:
                violations.append(f"weight symmetry: edge {key} stored with two values")
            if key not in edges:
                violations.append(f"weight: edge {key} is not in the graph")
            if not (w > 0 and math.isfinite(w)):
                violations.append(f"weight positivity: edge {key} has weight {w}")
        for key in sorted(edges):
            if key not in graph.weights and key[::-1] not in graph.weights:
                violations.append(f"weight: edge {key} has no weight")
    return violations


def graph_hash(graph: PortedGraph) -> str:
    """SHA-256 of the adjacency arrays and weights"""
    payload = {
        "n": graph.n,
        "ports": [list(p) for p in graph.port_map],
        "weights": sorted([list(k) + [w] for k, w in graph.weights.items()]) if graph.weights else None,
    }
    return hashlib.sha256(json.dumps(payload, separators=(",", ":")).encode()).hexdigest()


def edge_array(graph: PortedGraph) -> EdgeTable:
    """(u, v, weight, rank) arrays plus the edge index behind every port"""
    return graph.edge_table


def to_networkx(graph: PortedGraph) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(graph.n))
    for u, v in graph.edges():
        g.add_edge(u, v, weight=graph.weight(u, v))
    return g


# ==================== ELECTRIC NETWORKS ====================

@dataclass(frozen=True)
class ElectricNetwork:
    """Rooted weighted edge set with a marked vertex set"""
    edges: Tuple[Tuple[int, int, float], ...]
    root: int
    marked: FrozenSet[int] = frozenset()
    token: Hashable = field(default=None, compare=False)
    base: Optional[PortedGraph] = field(default=None, compare=False, repr=False)

    @classmethod
    def build(cls, edges, root: int, marked: Iterable[int] = (), token: Hashable = None,
              base: Optional[PortedGraph] = None) -> "ElectricNetwork":
        """Canonicalize (u, v, w) items (or an edge -> weight mapping)"""
        if isinstance(edges, Mapping):
            edges = [(u, v, w) for (u, v), w in edges.items()]
        table: Dict[Edge, float] = {}
        for u, v, w in edges:
            w = float(w)
            if not (w > 0 and math.isfinite(w)):
                raise NetworkError(f"edge ({u}, {v}) has non-positive weight {w}")
            if u == v:
                raise NetworkError(f"self-loop at {u} in electric network")
            table[canonical(int(u), int(v))] = w
        ordered = tuple((u, v, table[(u, v)]) for u, v in sorted(table))
        return cls(edges=ordered, root=int(root), marked=frozenset(int(x) for x in marked),
                   token=token, base=base)

    @cached_property
    def vertices(self) -> Tuple[int, ...]:
        nodes = {self.root}
        for u, v, _ in self.edges:
            nodes.add(u)
            nodes.add(v)
        return tuple(sorted(nodes))

    @cached_property
    def _index(self) -> Dict[int, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    def _matrix(self, weights: bool) -> sp.csr_matrix:
        index = self._index
        size = len(self.vertices)
        if not self.edges:
            return sp.csr_matrix((size, size))
        rows = np.array([index[u] for u, _, _ in self.edges])
        cols = np.array([index[v] for _, v, _ in self.edges])
        data = np.array([w if weights else 1.0 for _, _, w in self.edges])
        upper = sp.csr_matrix((data, (rows, cols)), shape=(size, size))
        return (upper + upper.T).tocsr()

    @cached_property
    def root_component(self) -> FrozenSet[int]:
        order = csgraph.breadth_first_order(self._matrix(False), self._index[self.root],
                                            directed=False, return_predecessors=False)
        return frozenset(self.vertices[i] for i in order)

    def reachable_marked(self) -> FrozenSet[int]:
        return self.marked & self.root_component

    def has_reachable_marked(self) -> bool:
        return bool(self.reachable_marked())

    def materialize(self) -> "ElectricNetwork":
        return self

    def conductance_laplacian(self) -> sp.csr_matrix:
        adjacency = self._matrix(True)
        degree = np.asarray(adjacency.sum(axis=1)).ravel()
        return (sp.diags(degree) - adjacency).tocsr()


@dataclass(frozen=True)
class UnitFlow:
    """Antisymmetric flow on directed arcs"""
    values: Mapping[Edge, float]

    @classmethod
    def from_edges(cls, flows: Mapping[Edge, float]) -> "UnitFlow":
        values: Dict[Edge, float] = {}
        for (u, v), f in flows.items():
            values[(u, v)] = float(f)
            values[(v, u)] = -float(f)
        return cls(values=values)

    def on(self, u: int, v: int) -> float:
        if (u, v) in self.values:
            return self.values[(u, v)]
        if (v, u) in self.values:
            return -self.values[(v, u)]
        return 0.0


def total_weight(net: ElectricNetwork) -> float:
    return float(sum(w for _, _, w in net.edges))


def flow_energy(net: ElectricNetwork, flow: UnitFlow, tol: float = FLOW_TOLERANCE) -> float:
    """
    Energy Σ f_e²/w_e of a unit flow from the root into the marked set

    Raises:
        FlowError: on antisymmetry or conservation violations, naming the node
    """
    arcs = {(u, v) for u, v, _ in net.edges} | {(v, u) for u, v, _ in net.edges}
    for (u, v), f in flow.values.items():
        if (u, v) not in arcs:
            if abs(f) > tol:
                raise FlowError(f"flow on ({u}, {v}) which is not an edge of the network", node=u)
            continue
        if (v, u) in flow.values and abs(flow.values[(v, u)] + f) > tol:
            raise FlowError(f"flow on ({u}, {v}) is not antisymmetric", node=u)

    outflow: Dict[int, float] = {v: 0.0 for v in net.vertices}
    energy = 0.0
    for u, v, w in net.edges:
        f = flow.on(u, v)
        outflow[u] += f
        outflow[v] -= f
        energy += f * f / w

    sinks = net.marked
    if net.root not in sinks:
        if abs(outflow[net.root] - 1.0) > tol:
            errmsg = f"source node {net.root} emits {outflow[net.root]:.6g}, expected 1"
            log.error(errmsg)
            raise FlowError(errmsg, node=net.root)
        inflow = -sum(outflow.get(m, 0.0) for m in sinks)
        if abs(inflow - 1.0) > tol:
            errmsg = f"marked set absorbs {inflow:.6g}, expected 1"
            log.error(errmsg)
            raise FlowError(errmsg, node=min(sinks) if sinks else None)
    for v, out in outflow.items():
        if v == net.root or v in sinks:
            continue
        if abs(out) > tol:
            errmsg = f"conservation fails at node {v} (net outflow {out:.6g})"
            log.error(errmsg)
            raise FlowError(errmsg, node=v)
    return energy


def effective_resistance(net: ElectricNetwork, settings: Optional[Settings] = None) -> float:
    """
    Effective resistance between the root and the marked set

    Grounds every reachable marked vertex, injects one unit of current at the
    root and returns the root potential.

    Raises:
        EmptyMarkedError: no marked vertex at all
        UnreachableMarkedError: no marked vertex in the root's component
    """
    settings = settings or get_settings()
    if not net.marked:
        raise EmptyMarkedError("effective resistance needs a nonempty marked set")
    if net.root in net.marked:
        return 0.0
    component = net.root_component
    sinks = net.marked & component
    if not sinks:
        raise UnreachableMarkedError(f"no marked vertex reachable from root {net.root}")

    index = net._index
    free = [v for v in net.vertices if v in component and v not in sinks]
    positions = np.array([index[v] for v in free])
    laplacian = net.conductance_laplacian()[positions][:, positions]
    rhs = np.zeros(len(free))
    rhs[free.index(net.root)] = 1.0

    if len(free) <= settings.dense_solve_limit:
        potential = np.linalg.solve(laplacian.toarray(), rhs)
    else:
        potential, info = cg(laplacian, rhs, rtol=settings.cg_rtol, atol=0.0, maxiter=20 * len(free))
        if info != 0:
            log.warning("conjugate gradient stopped with info=%d on %d nodes", info, len(free))
    return float(potential[free.index(net.root)])


# ==================== GENERATORS ====================

def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def shuffle_ports(graph: PortedGraph, seed) -> PortedGraph:
    """Permute every node's port array, keeping inverse ports consistent"""
    rng = _rng(seed)
    perms = [rng.permutation(graph.degree(v)) for v in range(graph.n)]
    new_port = []
    for v in range(graph.n):
        lookup = np.empty(graph.degree(v), dtype=np.int64)
        lookup[perms[v]] = np.arange(1, graph.degree(v) + 1)
        new_port.append(lookup)
    port_map, inverse = [], []
    for v in range(graph.n):
        f_v, q_v = [], []
        for old in perms[v]:
            u = graph.port_map[v][old]
            f_v.append(u)
            q_v.append(int(new_port[u][graph.inverse_port[v][old] - 1]))
        port_map.append(tuple(f_v))
        inverse.append(tuple(q_v))
    return PortedGraph(n=graph.n, port_map=tuple(port_map), inverse_port=tuple(inverse),
                       weights=graph.weights, edge_order=graph.edge_order)


def with_unique_weights(graph: PortedGraph, seed=None) -> PortedGraph:
    """Attach the weights 1..m in a random order"""
    rng = _rng(seed)
    edges = graph.edges()
    values = rng.permutation(len(edges)) + 1
    return PortedGraph(n=graph.n, port_map=graph.port_map, inverse_port=graph.inverse_port,
                       weights={e: float(w) for e, w in zip(edges, values)},
                       edge_order=graph.edge_order)


def _finish(edges: List[Edge], n: int, weighted: bool, seed) -> PortedGraph:
    graph = build_from_edge_list(edges, n)
    return with_unique_weights(graph, seed) if weighted else graph


def gen_path(n: int, weighted: bool = False, seed=None) -> PortedGraph:
    return _finish([(i, i + 1) for i in range(n - 1)], n, weighted, seed)


def gen_star(n: int, weighted: bool = False, seed=None) -> PortedGraph:
    if n < 1:
        raise GraphError(f"star needs n >= 1, got {n}")
    return _finish([(0, i) for i in range(1, n)], n, weighted, seed)


def gen_complete(n: int, weighted: bool = False, seed=None) -> PortedGraph:
    return _finish([(u, v) for u in range(n) for v in range(u + 1, n)], n, weighted, seed)


def gen_grid(rows: int, cols: int, weighted: bool = False, seed=None) -> PortedGraph:
    if rows < 1 or cols < 1:
        raise GraphError(f"grid needs positive sides, got {rows}x{cols}")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return _finish(edges, rows * cols, weighted, seed)


def gen_two_cliques_joined(k: int, weighted: bool = False, seed=None) -> PortedGraph:
    """Two k-cliques on 0..k-1 and k..2k-1 joined by the single edge {k-1, k}"""
    edges = [(u, v) for u in range(k) for v in range(u + 1, k)]
    edges += [(u, v) for u in range(k, 2 * k) for v in range(u + 1, 2 * k)]
    edges.append((k - 1, k))
    return _finish(edges, 2 * k, weighted, seed)


def gen_random_connected(n: int, m: int, weighted: bool = False, seed=None) -> PortedGraph:
    """
    Random connected simple graph: random recursive spanning tree, then uniform fill

    Raises:
        GraphError: when (n, m) is infeasible
    """
    if n < 1 or m < n - 1 or m > n * (n - 1) // 2:
        raise GraphError(f"infeasible random graph (n={n}, m={m})")
    rng = _rng(seed)
    order = rng.permutation(n)
    tree = [canonical(int(order[i]), int(order[rng.integers(0, i)])) for i in range(1, n)]
    edges = list(tree)
    if m > len(tree):
        rows, cols = np.triu_indices(n, k=1)
        codes = rows * n + cols
        taken = np.array([u * n + v for u, v in tree], dtype=np.int64)
        candidates = codes[~np.isin(codes, taken)]
        picked = rng.choice(candidates, size=m - len(tree), replace=False)
        edges += [(int(c // n), int(c % n)) for c in picked]
    edges = [edges[i] for i in rng.permutation(len(edges))]
    graph = build_from_edge_list(edges, n)
    return with_unique_weights(graph, rng) if weighted else graph


def bridge_cliques(graph: PortedGraph, a: int, b: int, c: int, d: int) -> PortedGraph:
    """
    Replace edges {a,b} and {c,d} by {a,c} and {b,d}, reusing their port slots

    Only the four array entries of those slots change; every degree stays.
    """
    for u, v in ((a, b), (c, d)):
        if canonical(u, v) not in graph.edge_index:
            raise GraphError(f"bridge needs edge ({u}, {v}) to exist", edge=(u, v))
    for u, v in ((a, c), (b, d)):
        if canonical(u, v) in graph.edge_index:
            raise GraphError(f"bridge edge ({u}, {v}) already exists", edge=(u, v))
    port_map = [list(ports) for ports in graph.port_map]
    inverse = [list(ports) for ports in graph.inverse_port]
    pa, pb = graph.port_to(a, b), graph.port_to(b, a)
    pc, pd = graph.port_to(c, d), graph.port_to(d, c)
    port_map[a][pa - 1], inverse[a][pa - 1] = c, pc
    port_map[c][pc - 1], inverse[c][pc - 1] = a, pa
    port_map[b][pb - 1], inverse[b][pb - 1] = d, pd
    port_map[d][pd - 1], inverse[d][pd - 1] = b, pb
    removed = {canonical(a, b), canonical(c, d)}
    order = [e for e in graph.edge_order if e not in removed] + [canonical(a, c), canonical(b, d)]
    return PortedGraph(n=graph.n, port_map=tuple(map(tuple, port_map)),
                       inverse_port=tuple(map(tuple, inverse)), edge_order=tuple(order))


def gen_two_cliques_crossed(n: int, bridge: Optional[Tuple[int, int, int, int]] = None) -> PortedGraph:
    """
    Two disjoint n-cliques on 0..n-1 and n..2n-1, optionally bridged in place

    With bridge (a, b, c, d) the edges {a,b} and {c,d} become {a,c} and {b,d}
    by rewriting the four port slots they occupied.
    """
    if n < 2:
        raise GraphError(f"two-clique instance needs n >= 2, got {n}")
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)]
    edges += [(u, v) for u in range(n, 2 * n) for v in range(u + 1, 2 * n)]
    graph = build_from_edge_list(edges, 2 * n)
    if bridge is None:
        return graph

    a, b, c, d = bridge
    if not (0 <= a < b < n <= c < d < 2 * n):
        raise GraphError(f"bridge {bridge} must satisfy 0 <= a < b < {n} <= c < d < {2 * n}")
    return bridge_cliques(graph, a, b, c, d)


def one_factorization(n: int) -> List[List[Edge]]:
    """The n-1 perfect matchings of K_n (n even) from the circle method"""
    rounds = []
    for k in range(n - 1):
        pairs = [canonical(k, n - 1)]
        for i in range(1, n // 2):
            pairs.append(canonical((k + i) % (n - 1), (k - i) % (n - 1)))
        rounds.append(pairs)
    return rounds


@dataclass(frozen=True)
class BfsHardLayout:
    root: int
    a_nodes: Tuple[int, ...]
    b_nodes: Tuple[int, ...]
    c_nodes: Tuple[int, ...]


def bfs_hard_layout(n: int, d: int) -> BfsHardLayout:
    return BfsHardLayout(
        root=0,
        a_nodes=tuple(range(1, n + 1)),
        b_nodes=tuple(range(n + 1, n + d + 1)),
        c_nodes=tuple(range(n + d + 1, 2 * n + d + 1)),
    )


def gen_bfs_hard_instance(n: int, d: int, perm_seed=None) -> Tuple[PortedGraph, int]:
    """
    Three-level BFS instance: root, level A, hub level B, level C

    Returns:
        tuple: (graph with shuffled ports, root id)
    """
    if n < 2 or n % 2:
        raise GraphError(f"level size n must be even and >= 2, got {n}")
    if not 1 <= d <= n - 1:
        raise GraphError(f"d must lie in [1, {n - 1}], got {d}")
    layout = bfs_hard_layout(n, d)
    A, B, C = layout.a_nodes, layout.b_nodes, layout.c_nodes
    edges = [(layout.root, a) for a in A]
    edges += [(a, b) for a in A for b in B]
    edges += [(A[i], C[i]) for i in range(n)]
    for matching in one_factorization(n)[:d]:
        edges += [(C[i], C[j]) for i, j in matching]
    graph = build_from_edge_list(edges, 2 * n + d + 1)
    return shuffle_ports(graph, perm_seed), layout.root
