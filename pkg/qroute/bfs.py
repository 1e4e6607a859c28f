"""
Breadth-first search for qroute
Low-depth explorations from many sources, sparse neighborhood covers built
from them, and the full BFS tree driven by cover pings and Grover searches.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Set, Tuple

import networkx as nx
import numpy as np
from scipy.sparse import csgraph

from .config import Settings
from .errors import DisconnectedGraphError, PreconditionError
from .graphs import PortedGraph, to_networkx
from .ledger import Category, MessageLedger
from .mst import run_mst
from .primitives import ClusterState, GroverTask, broadcast, convergecast, convergecast_sum, run_grover
from .simulator import RoutingContext
from .walk import Fidelity

log = logging.getLogger(__name__)


# ==================== OUTPUTS ====================

@dataclass
class BfsOutput:
    """Per-node layer, parent port and child ports of a BFS tree"""
    root: int
    layer: Dict[int, int]
    parent_port: Dict[int, Optional[int]]
    child_ports: Dict[int, Tuple[int, ...]]
    grover_invocations: Dict[int, int]
    phases: int = 0
    cover_trees: int = 0

    @property
    def complete(self) -> bool:
        return len(self.layer) == len(self.grover_invocations)

    def records(self) -> List[dict]:
        return [
            {"node": v, "layer": self.layer.get(v), "parent_port": self.parent_port.get(v),
             "child_ports": list(self.child_ports.get(v, ())),
             "grover_invocations": self.grover_invocations[v]}
            for v in sorted(self.grover_invocations)
        ]


@dataclass
class CoverOutput:
    """Trees of a sparse (κ, W)-neighborhood cover"""
    trees: List[ClusterState]
    kappa: int
    W: int
    rates: List[float]
    covered_in: Dict[int, int]
    congestion_bound: int

    def memberships(self) -> Dict[int, List[Tuple[int, Optional[int], int]]]:
        """node -> [(tree id, parent port, depth)] over every tree holding it"""
        out: Dict[int, List[Tuple[int, Optional[int], int]]] = {}
        for tree in self.trees:
            for v in tree.members:
                out.setdefault(v, []).append((tree.cluster_id, tree.parent_port[v], tree.depth[v]))
        return out

    def trees_of(self) -> Dict[int, List[int]]:
        """node -> indices into trees"""
        out: Dict[int, List[int]] = {}
        for t, tree in enumerate(self.trees):
            for v in tree.members:
                out.setdefault(v, []).append(t)
        return out

    def records(self) -> List[dict]:
        return [
            {"tree": tree.cluster_id, "root": tree.root,
             "members": [[v, tree.parent_port[v], tree.depth[v]] for v in tree.members]}
            for tree in self.trees
        ]


@dataclass(frozen=True)
class CoverAudit:
    max_depth: int
    depth_limit: int
    depth_constant: float
    max_membership: int
    membership_limit: int
    sparsity_constant: float
    uncovered: Tuple[int, ...]

    @property
    def depth_ok(self) -> bool:
        return self.max_depth <= self.depth_limit

    @property
    def sparsity_ok(self) -> bool:
        return self.max_membership <= self.membership_limit

    @property
    def neighborhood_ok(self) -> bool:
        return not self.uncovered

    @property
    def passed(self) -> bool:
        return self.depth_ok and self.sparsity_ok and self.neighborhood_ok


def oracle_bfs_layers(graph: PortedGraph, root: int) -> Dict[int, int]:
    return dict(nx.single_source_shortest_path_length(to_networkx(graph), root))


def source_congestion(graph: PortedGraph, sources: Iterable[int], d: int) -> int:
    """Largest number of sources within d hops of any node"""
    sources = sorted(set(sources))
    if not sources:
        return 0
    dist = csgraph.dijkstra(graph.adjacency, unweighted=True, indices=sources, limit=d)
    return int((dist <= d).sum(axis=0).max())


def _default_alpha(n: int, settings: Settings) -> float:
    return n ** -settings.grover_alpha_exponent if n > 1 else 0.5


# ==================== LOW-DEPTH EXPLORATION ====================

def explore(ctx: RoutingContext, sources: Iterable[int], d: int, k: int,
            alpha: Optional[float] = None, tag: str = "explore",
            counts: Optional[np.ndarray] = None) -> Dict[int, ClusterState]:
    """
    Grow depth-d BFS trees from every source at once

    Layer i takes k subphases. In each, every node Grover-searches its ports
    for a neighbor that sat in some tree, as of the start of the layer, that
    the node has not joined yet; on success it joins the tree with the
    smallest root id among those, with the neighbor as parent. A node joins
    at most one tree per subphase.

    Args:
        ctx: Routing context to charge
        sources: Tree roots
        d: Depth of every tree
        k: Subphases per layer (at most k sources may reach a node)
        alpha: Grover failure bound, n^-2 by default
        tag: Ledger phase tag
        counts: Optional per-node Grover invocation counters, updated in place

    Returns:
        dict: root -> ClusterState of its exploration tree
    """
    graph = ctx.graph
    n = graph.n
    roots = sorted(set(int(s) for s in sources), key=lambda s: int(ctx.ids[s]))
    if d < 0 or k < 1:
        raise PreconditionError(f"exploration needs d >= 0 and k >= 1, got d={d}, k={k}")
    if not roots:
        return {}
    alpha = alpha if alpha is not None else _default_alpha(n, ctx.settings)
    count = len(roots)
    joined = np.zeros((n, count), dtype=bool)
    joined[roots, np.arange(count)] = True
    parents: List[Dict[int, Optional[int]]] = [{s: None} for s in roots]
    targets = graph.port_targets
    cost_mode = ctx.fidelity is Fidelity.COST

    with ctx.phase(tag):
        for i in range(1, d + 1):
            start = joined.copy()
            sub = 0
            while sub < k:
                sub += 1
                tasks = []
                for v in range(n):
                    if len(targets[v]) == 0 or joined[v].all():
                        continue
                    marked = (start[targets[v]] & ~joined[v]).any(axis=1)
                    tasks.append(GroverTask.over_ports(v, marked, alpha))
                outcomes = run_grover(ctx, tasks)
                if counts is not None:
                    for task in tasks:
                        counts[task.owner] += 1
                found_any = False
                for task, outcome in zip(tasks, outcomes):
                    if outcome.found is None:
                        continue
                    found_any = True
                    v, p = task.owner, outcome.found
                    u = graph.neighbor(v, p)
                    open_trees = np.flatnonzero(start[u] & ~joined[v])
                    t = int(open_trees[0])
                    joined[v, t] = True
                    parents[t][v] = u
                if not found_any and cost_mode and sub < k:
                    # nothing can change for the rest of the layer; charge the remaining subphases at once
                    rest = k - sub
                    for task, outcome in zip(tasks, outcomes):
                        ctx.charge_quantum(Category.GROVER, task.owner, rest * outcome.messages)
                        if counts is not None:
                            counts[task.owner] += rest
                    ctx.advance(rest * max((o.rounds for o in outcomes), default=0))
                    sub = k
            log.debug("%s layer %d: %d memberships", tag, i, int(joined.sum()))

    return {
        roots[t]: ClusterState.from_parents(graph, ctx.ids, parents[t])
        for t in range(count)
    }


def low_depth_bfs(graph: PortedGraph, sources: Iterable[int], d: int, k: int,
                  alpha: Optional[float] = None, fidelity: Fidelity = Fidelity.COST, seed: int = 0,
                  settings: Optional[Settings] = None, audit: bool = False,
                  ) -> Tuple[Dict[int, ClusterState], MessageLedger]:
    """Depth-d BFS trees rooted at every source; see explore()"""
    sources = sorted(set(sources))
    ctx = RoutingContext(graph, seed=seed, fidelity=fidelity, settings=settings, audit=audit)
    if audit:
        congestion = source_congestion(graph, sources, d)
        ctx.audit("exploration-congestion", congestion=congestion, k=k)
        if congestion > k:
            log.warning("%d sources within %d hops of one node exceed k=%d; trees may be incomplete",
                        congestion, d, k)
    forest = explore(ctx, sources, d, k, alpha)
    return forest, ctx.ledger


# ==================== SPARSE COVER ====================

def sampling_rate(i: int, kappa: int, n: int) -> float:
    """Probability that an uncovered node starts a tree in phase i (1-based)"""
    if i >= kappa or n < 2:
        return 1.0
    return min(1.0, n ** (i / kappa - 1) * math.log(n))


def congestion_bound(n: int, kappa: int, settings: Settings) -> int:
    if n < 2:
        return 1
    return max(1, math.ceil(settings.cover_congestion_constant * n ** (1 / kappa) * math.log(n)))


def build_cover(ctx: RoutingContext, kappa: int, W: int, counts: Optional[np.ndarray] = None) -> CoverOutput:
    """
    Sparse (κ, W)-neighborhood cover on a routing context

    Phase i samples uncovered nodes, explores to depth 2(κ-i+1)W from the
    sample and marks every node within 2(κ-i)W of a sampled root covered.
    """
    if kappa < 1 or W < 1:
        raise PreconditionError(f"cover needs kappa >= 1 and W >= 1, got kappa={kappa}, W={W}")
    n = ctx.n
    bound = congestion_bound(n, kappa, ctx.settings)
    uncovered = np.ones(n, dtype=bool)
    covered_in: Dict[int, int] = {}
    trees: List[ClusterState] = []
    rates: List[float] = []
    for i in range(1, kappa + 1):
        rate = sampling_rate(i, kappa, n)
        rates.append(rate)
        candidates = np.flatnonzero(uncovered)
        if len(candidates) == 0:
            break
        sampled = candidates[ctx.rng.random(len(candidates)) < rate]
        if len(sampled) == 0:
            continue
        depth = 2 * (kappa - i + 1) * W
        reach = 2 * (kappa - i) * W
        k = min(len(sampled), bound)
        forest = explore(ctx, sampled.tolist(), depth, k, tag="cover", counts=counts)
        for tree in forest.values():
            for v in tree.members:
                if uncovered[v] and tree.depth[v] <= reach:
                    uncovered[v] = False
                    covered_in[v] = i
        trees.extend(forest.values())
        log.debug("cover phase %d: %d roots, depth %d, k=%d, %d uncovered left",
                  i, len(sampled), depth, k, int(uncovered.sum()))
    return CoverOutput(trees=trees, kappa=kappa, W=W, rates=rates, covered_in=covered_in,
                       congestion_bound=bound)


def sparse_cover(graph: PortedGraph, kappa: int, W: int = 1, fidelity: Fidelity = Fidelity.COST,
                 seed: int = 0, settings: Optional[Settings] = None,
                 ) -> Tuple[CoverOutput, MessageLedger]:
    ctx = RoutingContext(graph, seed=seed, fidelity=fidelity, settings=settings)
    cover = build_cover(ctx, kappa, W)
    log.info("cover kappa=%d W=%d: %d trees, %d messages", kappa, W, len(cover.trees), ctx.ledger.total())
    return cover, ctx.ledger


def audit_cover(graph: PortedGraph, cover: CoverOutput) -> CoverAudit:
    """
    Check the depth, sparsity and neighborhood properties of a cover

    Depth is held to 2κW and membership to κ times the per-phase congestion
    bound; the observed constants are reported against W·κ and
    κ·n^{1/κ}·log n.
    """
    n, kappa, W = graph.n, cover.kappa, cover.W
    max_depth = max((tree.height for tree in cover.trees), default=0)
    counts = np.zeros(n, dtype=np.int64)
    for tree in cover.trees:
        counts[list(tree.members)] += 1
    max_membership = int(counts.max()) if n else 0
    scale = kappa * n ** (1 / kappa) * math.log(max(n, 2))

    member_sets = [set(tree.members) for tree in cover.trees]
    trees_of = cover.trees_of()
    dist = csgraph.dijkstra(graph.adjacency, unweighted=True, limit=W)
    uncovered = []
    for v in range(n):
        ball = set(np.flatnonzero(dist[v] <= W).tolist())
        if not any(ball <= member_sets[t] for t in trees_of.get(v, ())):
            uncovered.append(v)
    return CoverAudit(
        max_depth=max_depth, depth_limit=2 * kappa * W, depth_constant=max_depth / (W * kappa),
        max_membership=max_membership, membership_limit=kappa * cover.congestion_bound,
        sparsity_constant=max_membership / scale, uncovered=tuple(uncovered),
    )


# ==================== FULL BFS ====================

class _BfsRun:
    """State of one BFS execution on a routing context"""

    def __init__(self, ctx: RoutingContext, root: int, n_estimate: int):
        self.ctx = ctx
        self.graph = ctx.graph
        self.root = root
        self.n_estimate = n_estimate
        settings = ctx.settings
        self.alpha = _default_alpha(n_estimate, settings)
        self.kappa = max(1, math.ceil(math.log2(max(n_estimate, 2))))
        self.ping_rounds = max(1, math.ceil(settings.ping_round_constant * math.log2(max(n_estimate, 2)) ** 3))
        self.counts = np.zeros(self.graph.n, dtype=np.int64)
        self.layer: Dict[int, int] = {root: 0}
        self.parents: Dict[int, Optional[int]] = {root: None}
        self.parent_port: Dict[int, Optional[int]] = {root: None}
        self.in_tree = np.zeros(self.graph.n, dtype=bool)
        self.in_tree[root] = True
        self.cover: Optional[CoverOutput] = None
        self.trees_of: Dict[int, List[int]] = {}

    def ping(self, frontier: List[int]) -> Set[int]:
        """Frontier nodes ping the roots of their cover trees; pinged trees tell all members"""
        ctx = self.ctx
        pinged: Set[int] = set()
        forwarded: Set[Tuple[int, int]] = set()
        for u in frontier:
            for t in self.trees_of.get(u, ()):
                tree = self.cover.trees[t]
                v = u
                while v != tree.root and (t, v) not in forwarded:
                    forwarded.add((t, v))
                    v, _ = ctx.send(v, tree.parent_port[v], (tree.cluster_id,))
                pinged.add(t)
        informed: Set[int] = set()
        deepest = 0
        for t in sorted(pinged):
            tree = self.cover.trees[t]
            informed.update(broadcast(ctx, tree, (tree.cluster_id,), advance=False))
            deepest = max(deepest, tree.height)
        ctx.advance(max(self.ping_rounds, 2 * deepest))
        return informed

    def search(self, informed: Set[int], phase: int) -> List[int]:
        """Informed non-members look for a tree neighbor among their ports and join below it"""
        graph = self.graph
        targets = graph.port_targets
        tasks = [
            GroverTask.over_ports(v, self.in_tree[targets[v]], self.alpha)
            for v in sorted(informed) if v not in self.layer and len(targets[v])
        ]
        outcomes = run_grover(self.ctx, tasks)
        joined = []
        for task, outcome in zip(tasks, outcomes):
            v = task.owner
            self.counts[v] += 1
            if outcome.found is None:
                continue
            self.parent_port[v] = outcome.found
            self.parents[v] = graph.neighbor(v, outcome.found)
            self.layer[v] = phase
            joined.append(v)
        self.in_tree[joined] = True
        return joined

    def anyone_joined(self, phase: int) -> bool:
        """Convergecast a joined-this-phase flag over the partial tree, then broadcast it"""
        tree = ClusterState.from_parents(self.graph, self.ctx.ids, self.parents)
        flags = {v: int(self.layer[v] == phase) for v in tree.members}
        flag = convergecast(self.ctx, tree, flags, max)
        broadcast(self.ctx, tree, (flag,))
        return bool(flag)

    def run(self) -> BfsOutput:
        ctx = self.ctx
        with ctx.phase("bfs/cover"):
            self.cover = build_cover(ctx, self.kappa, 1)
        self.trees_of = self.cover.trees_of()

        frontier = [self.root]
        phase = 0
        while phase <= self.n_estimate:
            phase += 1
            with ctx.phase("bfs/ping"):
                informed = self.ping(frontier) if frontier else set()
                if not frontier:
                    ctx.advance(self.ping_rounds)
            with ctx.phase("bfs/grover"):
                frontier = self.search(informed, phase)
            log.debug("bfs phase %d: %d informed, %d joined", phase, len(informed), len(frontier))
            if phase & (phase - 1) == 0:
                with ctx.phase("bfs/termination"):
                    if not self.anyone_joined(phase):
                        break

        tree = ClusterState.from_parents(self.graph, ctx.ids, self.parents)
        return BfsOutput(
            root=self.root, layer=dict(self.layer), parent_port=dict(self.parent_port),
            child_ports=dict(tree.child_ports),
            grover_invocations={v: int(c) for v, c in enumerate(self.counts)},
            phases=phase, cover_trees=len(self.cover.trees),
        )


def learn_n(ctx: RoutingContext, delta: float) -> int:
    """Count the nodes over an MST and broadcast the count"""
    with ctx.phase("bfs/learn-n"):
        output = run_mst(ctx, delta)
        tree = ClusterState.from_parents(ctx.graph, ctx.ids, output.parents(ctx.graph))
        size = convergecast_sum(ctx, tree, {v: 1 for v in tree.members})
        broadcast(ctx, tree, (size,))
    return size


def run_bfs(ctx: RoutingContext, root: int, delta: float = 0.01, n_known: bool = True) -> BfsOutput:
    """BFS on an existing context, charging its ledger"""
    graph = ctx.graph
    if not 0 <= root < graph.n:
        raise PreconditionError(f"root {root} is not a node of a {graph.n}-node graph")
    n_estimate = graph.n if n_known else learn_n(ctx, delta)
    output = _BfsRun(ctx, root, n_estimate).run()
    if not output.complete:
        components = graph.component_count()
        if components > 1:
            errmsg = f"graph is disconnected: {components} components, BFS reached {len(output.layer)} nodes"
            log.error(errmsg)
            raise DisconnectedGraphError(errmsg)
        log.warning("bfs reached %d of %d nodes on a connected graph", len(output.layer), graph.n)
    return output


def bfs(graph: PortedGraph, root: int = 0, delta: float = 0.01, fidelity: Fidelity = Fidelity.COST,
        seed: int = 0, settings: Optional[Settings] = None, n_known: bool = True,
        audit: bool = False, retain_transcript: bool = False) -> Tuple[BfsOutput, MessageLedger]:
    """
    BFS tree rooted at root

    Args:
        graph: Connected communication graph
        root: BFS root
        delta: Failure probability of the MST run used to learn n
        fidelity: Exact Grover sampling or cost model
        seed: Run seed
        settings: Constants block
        n_known: When False, learn n through an MST first

    Returns:
        tuple: (BfsOutput, ledger)

    Raises:
        DisconnectedGraphError: when some node is unreachable from root
    """
    ctx = RoutingContext(graph, seed=seed, fidelity=fidelity, settings=settings, audit=audit,
                         retain_transcript=retain_transcript)
    output = run_bfs(ctx, root, delta, n_known)
    log.info("bfs n=%d m=%d: %d messages, %d rounds, %d phases",
             graph.n, graph.m, ctx.ledger.total(), ctx.ledger.rounds, output.phases)
    return output, ctx.ledger
