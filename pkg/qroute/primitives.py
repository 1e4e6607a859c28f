"""
Distributed primitives for qroute
Cluster trees with convergecast and broadcast, distributed Grover search
over a node's ports, and the FindAny / FindMin outgoing-edge searches.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import Settings, get_settings
from .errors import ClusterError, GraphError, PreconditionError
from .graphs import ElectricNetwork, PortedGraph, effective_resistance, total_weight
from .ledger import Category
from .scheduler import SchedulingMode, WalkRequest
from .simulator import RoutingContext
from .walk import Fidelity, Verdict

log = logging.getLogger(__name__)


# ==================== CLUSTERS ====================

@dataclass(frozen=True)
class ClusterState:
    """
    A cluster spanned by a rooted tree.

    parent_port[v] is None exactly at the root; child_ports[v] lists the
    ports of v leading to its children in ascending order.
    """
    cluster_id: int
    root: int
    members: Tuple[int, ...]
    parent_port: Mapping[int, Optional[int]]
    child_ports: Mapping[int, Tuple[int, ...]]
    depth: Mapping[int, int]

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def height(self) -> int:
        return max(self.depth.values())

    @classmethod
    def singleton(cls, v: int, ids: Sequence[int]) -> "ClusterState":
        return cls(cluster_id=int(ids[v]), root=v, members=(v,), parent_port={v: None},
                   child_ports={v: ()}, depth={v: 0})

    @classmethod
    def from_parents(cls, graph: PortedGraph, ids: Sequence[int],
                     parents: Mapping[int, Optional[int]]) -> "ClusterState":
        """
        Build a cluster from a parent pointer per member

        Args:
            graph: Communication graph the tree lives in
            ids: Random node ids; the cluster id is the root's
            parents: member -> parent member (None at the root)

        Raises:
            ClusterError: no unique root, a parent that is not a neighbor
                member, or a cycle (depth overflow)
        """
        roots = [v for v, p in parents.items() if p is None]
        if len(roots) != 1:
            raise ClusterError(f"cluster needs exactly one root, found {len(roots)}")
        root = roots[0]
        size = len(parents)
        parent_port: Dict[int, Optional[int]] = {}
        children: Dict[int, List[int]] = {v: [] for v in parents}
        for v, p in parents.items():
            if p is None:
                parent_port[v] = None
                continue
            if p not in parents:
                raise ClusterError(f"parent {p} of node {v} is not a cluster member")
            try:
                parent_port[v] = graph.port_to(v, p)
            except ValueError:
                raise ClusterError(f"parent {p} of node {v} is not a neighbor") from None
            children[p].append(graph.port_to(p, v))

        depth: Dict[int, int] = {root: 0}
        for v in parents:
            path = []
            x = v
            while x not in depth:
                path.append(x)
                if len(path) > size:
                    raise ClusterError(f"parent pointers starting at node {v} form a cycle")
                x = parents[x]
            d = depth[x]
            for y in reversed(path):
                d += 1
                depth[y] = d
        return cls(
            cluster_id=int(ids[root]), root=root, members=tuple(sorted(parents)),
            parent_port=parent_port, child_ports={v: tuple(sorted(ps)) for v, ps in children.items()},
            depth=depth,
        )

    def parent(self, graph: PortedGraph, v: int) -> Optional[int]:
        p = self.parent_port[v]
        return None if p is None else graph.neighbor(v, p)

    def parents(self, graph: PortedGraph) -> Dict[int, Optional[int]]:
        return {v: self.parent(graph, v) for v in self.members}

    def by_depth(self, deepest_first: bool = False) -> List[int]:
        return sorted(self.members, key=lambda v: (self.depth[v], v), reverse=deepest_first)

    def check(self, graph: PortedGraph) -> None:
        """Raise ClusterError unless parent and child ports agree along every tree edge"""
        if self.parent_port.get(self.root, 0) is not None:
            raise ClusterError(f"root {self.root} has a parent port")
        for v in self.members:
            p = self.parent_port[v]
            if v == self.root:
                continue
            if p is None:
                raise ClusterError(f"non-root node {v} has no parent port")
            parent = graph.neighbor(v, p)
            back = graph.reverse_port(v, p)
            if back not in self.child_ports.get(parent, ()):
                raise ClusterError(f"node {parent} does not list node {v} as a child")
            if self.depth[v] != self.depth[parent] + 1:
                raise ClusterError(f"depth of node {v} is not one more than its parent's")
        listed = sum(len(ports) for ports in self.child_ports.values())
        if listed != self.size - 1:
            raise ClusterError(f"{listed} child ports for {self.size} members")


def _as_payload(value) -> Tuple[int, ...]:
    return tuple(value) if isinstance(value, tuple) else (int(value),)


def convergecast(ctx: RoutingContext, cluster: ClusterState, values: Mapping[int, object],
                 combine: Callable, advance: bool = True):
    """Fold per-node values up the tree; each non-root sends once, after all of its children"""
    acc = {v: values[v] for v in cluster.members}
    for v in cluster.by_depth(deepest_first=True):
        if v == cluster.root:
            continue
        p = cluster.parent_port[v]
        parent, _ = ctx.send(v, p, _as_payload(acc[v]))
        acc[parent] = combine(acc[parent], acc[v])
    if advance:
        ctx.advance(cluster.height)
    return acc[cluster.root]


def convergecast_min(ctx: RoutingContext, cluster: ClusterState, values: Mapping[int, int],
                     advance: bool = True) -> Tuple[int, int]:
    """
    Minimum of the per-node values at the root, ties going to the smallest id

    Returns:
        tuple: (minimum value, node holding it)
    """
    keyed = {v: (int(values[v]), int(ctx.ids[v])) for v in cluster.members}
    value, rid = convergecast(ctx, cluster, keyed, min, advance=advance)
    return value, ctx.node_of(rid)


def convergecast_sum(ctx: RoutingContext, cluster: ClusterState, values: Mapping[int, int],
                     advance: bool = True) -> int:
    return convergecast(ctx, cluster, {v: int(values[v]) for v in cluster.members},
                        lambda a, b: a + b, advance=advance)


def broadcast(ctx: RoutingContext, cluster: ClusterState, payload: Sequence[int],
              advance: bool = True) -> Dict[int, Tuple[int, ...]]:
    """Send payload from the root down every tree edge; returns what each member holds"""
    payload = tuple(payload)
    held = {cluster.root: payload}
    for v in cluster.by_depth():
        for p in cluster.child_ports[v]:
            u, _ = ctx.send(v, p, payload)
            held[u] = payload
    if advance:
        ctx.advance(cluster.height)
    return held


def send_to_root(ctx: RoutingContext, cluster: ClusterState, v: int, payload: Sequence[int]) -> int:
    """Forward a report from v up to the root; returns the hop count"""
    hops = 0
    while v != cluster.root:
        v, _ = ctx.send(v, cluster.parent_port[v], payload)
        hops += 1
    return hops


# ==================== GROVER ====================

@dataclass(frozen=True)
class GroverTask:
    """
    One node's search over a finite domain.

    marked is the predicate evaluated over the domain as a boolean mask;
    the owner learns it one oracle check at a time.
    """
    owner: int
    domain: np.ndarray
    marked: np.ndarray
    epsilon: float
    alpha: float
    check_messages: int = 2
    check_rounds: int = 2

    @classmethod
    def over_ports(cls, owner: int, marked: np.ndarray, alpha: float, epsilon: Optional[float] = None,
                   **kwargs) -> "GroverTask":
        """Search the owner's ports 1..deg; epsilon defaults to 1/deg"""
        degree = len(marked)
        domain = np.arange(1, degree + 1)
        if epsilon is None:
            epsilon = 1 / degree if degree else 1.0
        return cls(owner, domain, np.asarray(marked, dtype=bool), epsilon, alpha, **kwargs)

    @classmethod
    def from_predicate(cls, owner: int, domain: Sequence[int], predicate: Callable[[int], bool],
                       epsilon: float, alpha: float, **kwargs) -> "GroverTask":
        mask = np.fromiter((bool(predicate(x)) for x in domain), dtype=bool, count=len(domain))
        return cls(owner, np.asarray(domain, dtype=np.int64), mask, epsilon, alpha, **kwargs)


@dataclass(frozen=True)
class GroverOutcome:
    found: Optional[int]
    messages: int
    rounds: int
    stages: int
    attempts: int


def grover_stages(alpha: float) -> int:
    return max(1, math.ceil(math.log(1 / alpha) / math.log(3)))


@lru_cache(maxsize=1024)
def _stage_worst_case(budget: int, cap: int, growth: float) -> Tuple[int, int]:
    """(oracle-check units, attempts) of one stage when every draw takes the largest j"""
    used = units = attempts = 0
    m = 1.0
    while used < budget:
        j = min(math.ceil(m), cap) - 1
        units += 2 * j + 1
        used += j + 1
        attempts += 1
        m *= growth
    return units, attempts


def distributed_grover(task: GroverTask, fidelity: Fidelity, rng: np.random.Generator,
                       settings: Optional[Settings] = None) -> GroverOutcome:
    """
    Search the owner's domain for a marked element

    Runs ⌈log(1/α)/log 3⌉ independent stages. A stage repeatedly draws j
    uniformly below a cap growing by the configured factor, applies j Grover
    iterations (two checks each), measures, and checks the outcome once;
    it gives up after ⌈budget·√(1/ε)⌉ iterations. Only checked elements are
    returned, so an unmarked element is never reported.

    In cost-model fidelity the smallest marked element is returned and the
    worst-case cost is charged: one stage when something is marked, all
    stages otherwise.
    """
    settings = settings or get_settings()
    if len(task.domain) == 0:
        raise PreconditionError(f"Grover search at node {task.owner} has an empty domain")
    if not 0 < task.epsilon <= 1:
        raise PreconditionError(f"epsilon must lie in (0, 1], got {task.epsilon}")
    if not 0 < task.alpha < 1:
        raise PreconditionError(f"alpha must lie in (0, 1), got {task.alpha}")

    stages = grover_stages(task.alpha)
    budget = math.ceil(settings.grover_stage_budget * math.sqrt(1 / task.epsilon))
    cap = math.ceil(math.sqrt(1 / task.epsilon))
    growth = settings.grover_stage_growth
    if len(task.marked) != len(task.domain):
        raise PreconditionError(f"marked mask does not cover the domain of node {task.owner}")
    marked = task.domain[task.marked]

    if Fidelity(fidelity) is Fidelity.COST:
        units, attempts = _stage_worst_case(budget, cap, growth)
        runs = 1 if len(marked) else stages
        return GroverOutcome(
            found=int(marked.min()) if len(marked) else None, messages=runs * units * task.check_messages,
            rounds=runs * units * task.check_rounds, stages=runs, attempts=runs * attempts,
        )

    theta = math.asin(math.sqrt(len(marked) / len(task.domain)))
    units = attempts = 0
    found = None
    stage = 0
    while stage < stages and found is None:
        stage += 1
        used = 0
        m = 1.0
        while used < budget:
            j = int(rng.integers(0, min(math.ceil(m), cap)))
            units += 2 * j + 1
            used += j + 1
            attempts += 1
            if len(marked) and rng.random() < math.sin((2 * j + 1) * theta) ** 2:
                found = int(marked[int(rng.integers(len(marked)))])
                break
            m *= growth
    return GroverOutcome(found=found, messages=units * task.check_messages,
                         rounds=units * task.check_rounds, stages=stage, attempts=attempts)


def run_grover(ctx: RoutingContext, tasks: Sequence[GroverTask]) -> List[GroverOutcome]:
    """Run searches side by side: messages add up, the clock moves by the slowest"""
    outcomes = [distributed_grover(task, ctx.fidelity, ctx.rng, ctx.settings) for task in tasks]
    for task, outcome in zip(tasks, outcomes):
        ctx.charge_quantum(Category.GROVER, task.owner, outcome.messages)
    ctx.advance(max((o.rounds for o in outcomes), default=0))
    return outcomes


# ==================== FIND ANY / FIND MIN ====================

@dataclass(frozen=True)
class OutgoingEdge:
    node: int
    port: int
    neighbor: int
    edge: int
    weight: float
    rank: int


class _SearchState:
    """Cluster membership, allowed arcs and good flags shared by one FindAny call"""

    def __init__(self, ctx: RoutingContext, clusters: Sequence[ClusterState],
                 rank_ranges: Optional[Sequence[Tuple[int, int]]]):
        graph = ctx.graph
        table = graph.edge_table
        n = graph.n
        self.ctx = ctx
        self.graph = graph
        self.clusters = clusters

        cluster_of = np.full(n, -1, dtype=np.int64)
        is_tree = np.zeros(table.m, dtype=bool)
        for ci, cluster in enumerate(clusters):
            members = np.fromiter(cluster.members, dtype=np.int64)
            if (cluster_of[members] >= 0).any():
                errmsg = f"cluster {cluster.cluster_id} overlaps another cluster"
                log.error(errmsg)
                raise ClusterError(errmsg)
            cluster_of[members] = ci
            for v, p in cluster.parent_port.items():
                if p is not None:
                    is_tree[table.port_edge[v][p - 1]] = True
        self.cluster_of = cluster_of
        self.is_tree = is_tree

        src, dst, edge = graph.arc_arrays
        cs, cd = cluster_of[src], cluster_of[dst]
        if rank_ranges is None:
            allowed = np.ones(len(src), dtype=bool)
        else:
            lo = np.array([r[0] for r in rank_ranges] + [0], dtype=np.int64)
            hi = np.array([r[1] for r in rank_ranges] + [0], dtype=np.int64)
            rank = table.rank[edge]
            allowed = (rank >= lo[cs]) & (rank < hi[cs]) & (cs >= 0)
            allowed |= is_tree[edge]
        self.allowed = allowed
        outgoing = allowed & (cs != cd) & (cs >= 0)
        self.good = np.zeros(n, dtype=bool)
        self.good[src[outgoing]] = True
        self.restricted_degree = np.bincount(src[allowed], minlength=n)

        self._sorted_ids = []
        self._sorted_members = []
        self._good_prefix = []
        for cluster in clusters:
            members = np.fromiter(cluster.members, dtype=np.int64)
            order = np.argsort(ctx.ids[members])
            members = members[order]
            self._sorted_members.append(members)
            self._sorted_ids.append(ctx.ids[members])
            self._good_prefix.append(np.concatenate([[0], np.cumsum(self.good[members])]))

    def _span(self, ci: int, lo: int, hi: int) -> Tuple[int, int]:
        ids = self._sorted_ids[ci]
        return int(np.searchsorted(ids, lo, "left")), int(np.searchsorted(ids, hi, "left"))

    def count_good(self, ci: int, lo: int, hi: int) -> int:
        a, b = self._span(ci, lo, hi)
        prefix = self._good_prefix[ci]
        return int(prefix[b] - prefix[a])

    def members_in(self, ci: int, lo: int, hi: int) -> List[int]:
        a, b = self._span(ci, lo, hi)
        return [int(v) for v in self._sorted_members[ci][a:b]]

    def scan_ports(self, v: int) -> List[int]:
        """Allowed non-tree ports of v in ascending order"""
        arcs = self.graph.port_arcs(v)
        edges = self.graph.edge_table.port_edge[v]
        keep = self.allowed[arcs] & ~self.is_tree[edges]
        return [int(p) + 1 for p in np.flatnonzero(keep)]

    def scan(self, v: int) -> Tuple[Optional[OutgoingEdge], int]:
        """Ask neighbors one port at a time whether they sit in another cluster"""
        own = self.cluster_of[v]
        cluster_id = self.clusters[own].cluster_id
        table = self.graph.edge_table
        scans = 0
        for p in self.scan_ports(v):
            u, q = self.ctx.send(v, p, (cluster_id,))
            outside = self.cluster_of[u] != own
            self.ctx.send(u, q, (int(outside),))
            scans += 1
            if outside:
                e = int(table.port_edge[v][p - 1])
                return OutgoingEdge(node=v, port=p, neighbor=u, edge=e,
                                    weight=float(table.weights[e]), rank=int(table.rank[e])), scans
        return None, scans


class FindAnyNetwork:
    """
    Electric network of one cluster and one id range, kept implicit.

    Edges are the cluster tree (weight = depth of the deeper endpoint) plus
    every allowed edge at a member whose id lies in [lo, hi) (weight 1);
    marked vertices are the outside endpoints of those edges.
    """

    def __init__(self, state: _SearchState, ci: int, lo: int, hi: int, token):
        self.state = state
        self.ci = ci
        self.lo = lo
        self.hi = hi
        self.token = token
        self.root = state.clusters[ci].root

    def has_reachable_marked(self) -> bool:
        return self.state.count_good(self.ci, self.lo, self.hi) > 0

    def materialize(self) -> ElectricNetwork:
        state = self.state
        cluster = state.clusters[self.ci]
        graph = state.graph
        edges = {}
        for v in cluster.members:
            p = cluster.parent_port[v]
            if p is not None:
                u = graph.neighbor(v, p)
                edges[(min(u, v), max(u, v))] = float(cluster.depth[v])
        marked = set()
        for v in state.members_in(self.ci, self.lo, self.hi):
            for p in state.scan_ports(v):
                u = graph.neighbor(v, p)
                edges[(min(u, v), max(u, v))] = 1.0
                if state.cluster_of[u] != self.ci:
                    marked.add(u)
        return ElectricNetwork.build(edges, root=self.root, marked=marked, token=self.token,
                                     base=graph)


def find_any_parameters(size: int) -> Tuple[float, float]:
    """(R, W) of the walks for a cluster of the given size"""
    return 1.0 + math.log2(size), 2.0 * size * size


def _audit_network(ctx: RoutingContext, net: FindAnyNetwork, size: int, R: float, W: float) -> None:
    explicit = net.materialize()
    weight = total_weight(explicit)
    resistance = None
    if explicit.has_reachable_marked():
        resistance = effective_resistance(explicit, ctx.settings)
    ctx.audit("find-any-network", size=size, total_weight=weight, W=W,
              effective_resistance=resistance, R=R)


def find_any(ctx: RoutingContext, clusters: Sequence[ClusterState], n_star: int, delta: float,
             rank_ranges: Optional[Sequence[Tuple[int, int]]] = None) -> List[Optional[OutgoingEdge]]:
    """
    Find an outgoing edge for every cluster of size at most n_star

    Phase 1 locates the minimum-id node whose (allowed) degree exceeds the
    cluster size; such a node has an outgoing edge among its first n_i + 1
    ports and scans them. Remaining clusters binary-search the id space with
    walks on FindAnyNetwork instances, scheduled in marked-shared mode, then
    the single node left in range scans its ports. Larger clusters only
    answer scans.

    Args:
        ctx: Routing context
        clusters: Node-disjoint clusters
        n_star: Size estimate; larger clusters skip the search
        delta: Failure probability per cluster
        rank_ranges: Optional per-cluster [lo, hi) window over global edge
            ranks; edges outside it are ignored unless they are tree edges

    Returns:
        list: per cluster, an OutgoingEdge or None
    """
    state = _SearchState(ctx, clusters, rank_ranges)
    results: List[Optional[OutgoingEdge]] = [None] * len(clusters)
    eligible = [ci for ci, c in enumerate(clusters) if c.size <= n_star]
    sentinel = ctx.id_space

    with ctx.phase("find-any"):
        # Phase 1: high-degree nodes
        searching = []
        rounds = 0
        for ci in eligible:
            cluster = clusters[ci]
            values = {
                v: int(ctx.ids[v]) if state.restricted_degree[v] > cluster.size else sentinel
                for v in cluster.members
            }
            best = convergecast(ctx, cluster, values, min, advance=False)
            broadcast(ctx, cluster, (best,), advance=False)
            cluster_rounds = 2 * cluster.height
            if best == sentinel:
                searching.append(ci)
            else:
                node = ctx.node_of(best)
                edge, scans = state.scan(node)
                hops = send_to_root(ctx, cluster, node, (edge.port if edge else 0,))
                cluster_rounds += 2 * scans + hops
                results[ci] = edge
            rounds = max(rounds, cluster_rounds)
        ctx.advance(rounds)

        # Phase 2: binary search over the id space
        bits = max(1, math.ceil(math.log2(ctx.id_space)))
        steps = bits + 1
        step_delta = delta / steps
        ranges = {ci: (0, 1 << bits) for ci in searching}
        for step in range(steps):
            if not ranges:
                break
            active = sorted(ranges)
            batch, senders, tests = [], [], []
            for ci in active:
                lo, hi = ranges[ci]
                test_hi = hi if step == 0 else (lo + hi) // 2
                size = clusters[ci].size
                R, W = find_any_parameters(size)
                net = FindAnyNetwork(state, ci, lo, test_hi, token=(clusters[ci].cluster_id, step))
                if ctx.auditing:
                    _audit_network(ctx, net, size, R, W)
                batch.append(WalkRequest(net, R, W, step_delta, mode=SchedulingMode.MARKED_SHARED))
                senders.append(clusters[ci].root)
                tests.append(test_hi)
            # clusters are node-disjoint, so two networks share only edges between
            # clusters, whose far endpoints are marked; the check is an audit here
            outcome = ctx.run_walks(batch, SchedulingMode.MARKED_SHARED, senders,
                                    check=ctx.auditing or ctx.fidelity is Fidelity.EXACT)

            rounds = 0
            for ci, test_hi, verdict in zip(active, tests, outcome.verdicts):
                found = verdict is Verdict.NONEMPTY
                broadcast(ctx, clusters[ci], (int(found),), advance=False)
                rounds = max(rounds, clusters[ci].height)
                lo, hi = ranges[ci]
                if step == 0:
                    if not found:
                        del ranges[ci]
                elif found:
                    ranges[ci] = (lo, test_hi)
                else:
                    ranges[ci] = (test_hi, hi)
            ctx.advance(rounds)

        rounds = 0
        for ci, (lo, hi) in sorted(ranges.items()):
            for v in state.members_in(ci, lo, hi):
                edge, scans = state.scan(v)
                hops = send_to_root(ctx, clusters[ci], v, (edge.port if edge else 0,))
                rounds = max(rounds, 2 * scans + hops)
                results[ci] = edge
        ctx.advance(rounds)

    log.debug("find-any over %d cluster(s), n*=%d: %d edge(s) found",
              len(eligible), n_star, sum(r is not None for r in results))
    return results


def check_unique_weights(graph: PortedGraph) -> None:
    if not graph.is_weighted:
        return
    weights = graph.edge_table.weights
    if len(np.unique(weights)) != len(weights):
        errmsg = "edge weights must be pairwise distinct"
        log.error(errmsg)
        raise GraphError(errmsg)


def find_min(ctx: RoutingContext, clusters: Sequence[ClusterState], n_star: int,
             delta: float) -> List[Optional[OutgoingEdge]]:
    """
    Minimum-weight outgoing edge per cluster of size at most n_star

    Binary search over global edge ranks: each round restricts FindAny to a
    rank window of the still-open clusters and tightens the window around
    the lightest edge found so far. Unweighted graphs rank edges by their
    insertion order.
    """
    check_unique_weights(ctx.graph)
    m = ctx.graph.m
    calls = max(1, math.ceil(math.log2(max(m, 2)))) + 1
    call_delta = delta / calls
    eligible = [ci for ci, c in enumerate(clusters) if c.size <= n_star]
    best: List[Optional[OutgoingEdge]] = [None] * len(clusters)

    with ctx.phase("find-min"):
        first = find_any(ctx, [clusters[ci] for ci in eligible], n_star, call_delta,
                         rank_ranges=[(0, m)] * len(eligible))
        windows: Dict[int, Tuple[int, int]] = {}
        for ci, edge in zip(eligible, first):
            if edge is not None:
                best[ci] = edge
                windows[ci] = (0, edge.rank + 1)

        while True:
            open_ = sorted(ci for ci, (lo, hi) in windows.items() if hi - lo > 1)
            if not open_:
                break
            tests = {ci: (windows[ci][0], (windows[ci][0] + windows[ci][1]) // 2) for ci in open_}
            found = find_any(ctx, [clusters[ci] for ci in open_], n_star, call_delta,
                             rank_ranges=[tests[ci] for ci in open_])
            for ci, edge in zip(open_, found):
                lo, hi = windows[ci]
                if edge is not None:
                    best[ci] = edge
                    windows[ci] = (lo, edge.rank + 1)
                else:
                    windows[ci] = (tests[ci][1], hi)
    return best
