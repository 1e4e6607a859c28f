"""
Minimum spanning tree for qroute
Fragment merging with exponentially growing size estimates; the same run
yields leader election, a spanning tree and broadcast over it.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx

from .config import Settings
from .errors import DisconnectedGraphError, ProtocolError
from .graphs import Edge, PortedGraph, canonical, to_networkx
from .ledger import MessageLedger
from .primitives import (
    ClusterState, OutgoingEdge, broadcast, convergecast_sum, find_any, find_min, send_to_root,
)
from .simulator import RoutingContext
from .walk import Fidelity

log = logging.getLogger(__name__)

PARENT = "parent"
CHILD = "child"


class NodeStatus(str, Enum):
    ELECTED = "elected"
    NON_ELECTED = "non-elected"


@dataclass
class MstOutput:
    """Per-node tree ports plus the root (and id) of every final fragment"""
    tree_ports: Dict[int, Dict[int, str]]
    roots: List[int]
    fragment_ids: List[int]
    phases: int = 0
    subphases: int = 0
    aborts: int = 0

    @property
    def root(self) -> int:
        return self.roots[0]

    @property
    def fragment_id(self) -> int:
        return self.fragment_ids[0]

    def edges(self, graph: PortedGraph) -> Set[Edge]:
        return {
            canonical(v, graph.neighbor(v, p))
            for v, ports in self.tree_ports.items() for p in ports
        }

    def parents(self, graph: PortedGraph) -> Dict[int, Optional[int]]:
        out: Dict[int, Optional[int]] = {}
        for v, ports in self.tree_ports.items():
            up = [p for p, tag in ports.items() if tag == PARENT]
            out[v] = graph.neighbor(v, up[0]) if up else None
        return out


@dataclass
class ElectionOutput:
    status: Dict[int, NodeStatus]
    leaders: List[int] = field(default_factory=list)


def oracle_mst_edges(graph: PortedGraph) -> Set[Edge]:
    """Edges of the minimum spanning forest, ranking edges the way FindMin does"""
    g = to_networkx(graph)
    table = graph.edge_table
    for e, (u, v) in enumerate(graph.edges()):
        g[u][v]["rank"] = int(table.rank[e])
    forest = nx.minimum_spanning_edges(g, weight="rank", data=False)
    return {canonical(u, v) for u, v in forest}


def _reroot(parents: Dict[int, Optional[int]], x: int, new_parent: int,
            undo: Dict[int, Optional[int]]) -> None:
    """Reverse the path from x to its old root and hang x below new_parent"""
    prev, cur = new_parent, x
    while cur is not None:
        nxt = parents[cur]
        undo.setdefault(cur, parents[cur])
        parents[cur] = prev
        prev, cur = cur, nxt


class _MstRun:
    """State of one MST execution on a routing context"""

    def __init__(self, ctx: RoutingContext, delta: float, terminate: str):
        if terminate not in ("detect", "fixed"):
            raise ValueError(f"terminate must be 'detect' or 'fixed', got {terminate!r}")
        self.ctx = ctx
        self.graph = ctx.graph
        self.terminate = terminate
        n = self.graph.n
        self.log_n = max(1, math.ceil(math.log2(max(n, 2))))
        self.max_phases = self.log_n + (1 if terminate == "fixed" else 2)
        subphase_total = sum(i + 1 for i in range(1, self.max_phases + 1))
        self.step_delta = delta / (2 * subphase_total + self.max_phases)
        self.parents: Dict[int, Optional[int]] = {v: None for v in range(n)}
        self.done: Set[int] = set()
        self.oracle: Optional[Set[Edge]] = None
        self.phases = self.subphases = self.aborts = 0

    def fragments(self) -> List[ClusterState]:
        children: Dict[int, List[int]] = {v: [] for v in self.parents}
        roots = []
        for v, p in self.parents.items():
            if p is None:
                roots.append(v)
            else:
                children[p].append(v)
        out = []
        for r in sorted(roots):
            members, queue = {}, deque([r])
            while queue:
                v = queue.popleft()
                members[v] = self.parents[v]
                queue.extend(children[v])
            out.append(ClusterState.from_parents(self.graph, self.ctx.ids, members))
        return out

    def run(self) -> MstOutput:
        for i in range(1, self.max_phases + 1):
            n_star = 2 ** i
            self.phases = i
            with self.ctx.phase(f"mst/phase-{i}"):
                for v in range(self.graph.n):
                    if v not in self.done:
                        self.parents[v] = None
                for _ in range(i + 1):
                    self.subphases += 1
                    if not self.subphase(n_star):
                        break
                if self.terminate == "detect" and self.check_termination(n_star):
                    break
            log.debug("mst phase %d (n*=%d): %d fragment(s)", i, n_star,
                      sum(1 for p in self.parents.values() if p is None))
        fragments = self.fragments()
        return MstOutput(
            tree_ports=self.tree_ports(fragments), roots=[f.root for f in fragments],
            fragment_ids=[f.cluster_id for f in fragments], phases=self.phases,
            subphases=self.subphases, aborts=self.aborts,
        )

    def subphase(self, n_star: int) -> bool:
        """One find-min / exchange / merge round; False when nothing was merged"""
        ctx = self.ctx
        fragments = self.fragments()
        active = [f for f in fragments if f.root not in self.done]
        if len(active) < 1:
            return False
        choice_list = find_min(ctx, active, n_star, self.step_delta)
        choice: Dict[int, Optional[OutgoingEdge]] = {f.root: c for f, c in zip(active, choice_list)}
        if not any(choice.values()):
            return False
        frag_of = {v: f.root for f in fragments for v in f.members}
        by_root = {f.root: f for f in fragments}

        # root-id exchange over the chosen edges
        rounds = 0
        mutual: Set[Tuple[int, int]] = set()
        chosen = {(c.node, c.neighbor) for c in choice.values() if c is not None}
        for root, edge in sorted(choice.items()):
            if edge is None:
                continue
            frag = by_root[root]
            broadcast(ctx, frag, (frag.cluster_id,), advance=False)
            ctx.send(edge.node, edge.port, (frag.cluster_id,))
            cost = frag.height + 1
            if (edge.neighbor, edge.node) in chosen:
                cost += send_to_root(ctx, frag, edge.node, (by_root[frag_of[edge.neighbor]].cluster_id,))
                mutual.add((root, frag_of[edge.neighbor]))
            rounds = max(rounds, cost)
        ctx.advance(rounds)

        # components of the fragment graph
        links: Dict[int, List[Tuple[int, int, int]]] = {f.root: [] for f in fragments}
        for root, edge in choice.items():
            if edge is None:
                continue
            other = frag_of[edge.neighbor]
            links[root].append((other, edge.node, edge.neighbor))
            links[other].append((root, edge.neighbor, edge.node))

        cutoff = math.ceil(ctx.settings.merge_round_factor * n_star)
        rounds = 0
        seen: Set[int] = set()
        for start in sorted(links):
            if start in seen or not links[start]:
                seen.add(start)
                continue
            component, queue = [start], deque([start])
            seen.add(start)
            while queue:
                f = queue.popleft()
                for g, _, _ in links[f]:
                    if g not in seen:
                        seen.add(g)
                        component.append(g)
                        queue.append(g)
            rounds = max(rounds, self.merge(component, links, choice, mutual, by_root, cutoff))
        ctx.advance(rounds)

        if ctx.auditing:
            self.audit_fragments()
        return True

    def merge(self, component: List[int], links, choice, mutual, by_root, cutoff: int) -> int:
        """Merge one fragment component under its chosen root; returns the rounds it took"""
        ctx = self.ctx
        pairs = [(a, b) for a, b in mutual if a in component]
        sinks = [f for f in component if choice.get(f) is None]
        if pairs:
            a, b = pairs[0]
            head = a if by_root[a].cluster_id > by_root[b].cluster_id else b
        elif sinks:
            head = max(sinks, key=lambda f: by_root[f].cluster_id)
        else:
            head = max(component, key=lambda f: by_root[f].cluster_id)

        undo: Dict[int, Optional[int]] = {}
        attached, queue = {head}, deque([head])
        while queue:
            f = queue.popleft()
            for g, x_f, y_g in links[f]:
                if g in attached:
                    continue
                attached.add(g)
                _reroot(self.parents, y_g, x_f, undo)
                queue.append(g)

        members = {v: self.parents[v] for f in component for v in by_root[f].members}
        merged = ClusterState.from_parents(self.graph, ctx.ids, members)
        reached = [v for v in merged.by_depth() if v != merged.root and merged.depth[v] <= cutoff]
        for v in reached:
            parent = self.graph.neighbor(v, merged.parent_port[v])
            ctx.send(parent, self.graph.reverse_port(v, merged.parent_port[v]), (merged.cluster_id,))

        if merged.height > cutoff:
            # abort: mirror the delivered messages back and restore the old trees
            for v in reversed(reached):
                ctx.send(v, merged.parent_port[v], (merged.cluster_id,))
            self.parents.update(undo)
            self.aborts += 1
            log.debug("merge of %d fragments aborted at depth %d > %d", len(component), merged.height, cutoff)
            return 2 * cutoff

        for v in merged.members:
            self.done.discard(v)
        size = convergecast_sum(ctx, merged, {v: 1 for v in merged.members}, advance=False)
        broadcast(ctx, merged, (size,), advance=False)
        return 3 * merged.height

    def check_termination(self, n_star: int) -> bool:
        """Fragments of size at most n* without an outgoing edge stop; True once all stopped"""
        active = [f for f in self.fragments() if f.root not in self.done]
        found = find_any(self.ctx, active, n_star, self.step_delta)
        for frag, edge in zip(active, found):
            if frag.size <= n_star and edge is None:
                self.done.update(frag.members)
        return len(self.done) == self.graph.n

    def audit_fragments(self) -> None:
        if self.oracle is None:
            self.oracle = oracle_mst_edges(self.graph)
        tree = {canonical(v, p) for v, p in self.parents.items() if p is not None}
        self.ctx.audit("mst-fragments", subset=tree <= self.oracle, extra=sorted(tree - self.oracle))

    def tree_ports(self, fragments: Sequence[ClusterState]) -> Dict[int, Dict[int, str]]:
        ports: Dict[int, Dict[int, str]] = {}
        for frag in fragments:
            for v in frag.members:
                tags = {p: CHILD for p in frag.child_ports[v]}
                if frag.parent_port[v] is not None:
                    tags[frag.parent_port[v]] = PARENT
                ports[v] = tags
        return ports


def run_mst(ctx: RoutingContext, delta: float = 0.01, terminate: str = "detect",
            allow_disconnected: bool = False) -> MstOutput:
    """MST on an existing context, charging its ledger"""
    output = _MstRun(ctx, delta, terminate).run()
    if len(output.roots) > 1:
        components = ctx.graph.component_count()
        if components > 1 and not allow_disconnected:
            errmsg = f"graph is disconnected: {components} components, {len(output.roots)} final fragments"
            log.error(errmsg)
            raise DisconnectedGraphError(errmsg)
        if components == 1:
            log.warning("mst ended with %d fragments on a connected graph", len(output.roots))
    return output


def mst(graph: PortedGraph, delta: float = 0.01, fidelity: Fidelity = Fidelity.COST, seed: int = 0,
        settings: Optional[Settings] = None, terminate: str = "detect",
        allow_disconnected: bool = False, audit: bool = False,
        retain_transcript: bool = False) -> Tuple[MstOutput, MessageLedger]:
    """
    Minimum spanning tree (spanning tree on unweighted graphs)

    Args:
        graph: Graph with pairwise distinct weights, or unweighted
        delta: Overall failure probability
        fidelity: Exact walk simulation or cost model
        seed: Run seed
        settings: Constants block
        terminate: "detect" stops once a fragment finds no outgoing edge;
            "fixed" runs ⌈log₂ n⌉ + 1 phases
        allow_disconnected: Return a spanning forest instead of raising
        audit: Record fragment and network audits on the context

    Returns:
        tuple: (MstOutput, ledger)

    Raises:
        DisconnectedGraphError: on disconnected input unless allowed
    """
    ctx = RoutingContext(graph, seed=seed, fidelity=fidelity, settings=settings, audit=audit,
                         retain_transcript=retain_transcript)
    output = run_mst(ctx, delta, terminate, allow_disconnected)
    log.info("mst n=%d m=%d: %d messages, %d rounds, %d phases",
             graph.n, graph.m, ctx.ledger.total(), ctx.ledger.rounds, output.phases)
    return output, ctx.ledger


def leader_election(graph: PortedGraph, delta: float = 0.01, fidelity: Fidelity = Fidelity.COST,
                    seed: int = 0, settings: Optional[Settings] = None,
                    ) -> Tuple[ElectionOutput, MessageLedger]:
    """The root of every final fragment is ELECTED; one leader per connected component"""
    output, ledger = mst(graph, delta, fidelity, seed, settings, allow_disconnected=True)
    status = {v: NodeStatus.NON_ELECTED for v in range(graph.n)}
    for root in output.roots:
        status[root] = NodeStatus.ELECTED
    return ElectionOutput(status=status, leaders=sorted(output.roots)), ledger


def flood_tree(ctx: RoutingContext, tree: MstOutput, source: int, item: Sequence[int]) -> Dict[int, Tuple[int, ...]]:
    """Send item from source along every tree edge once; the clock moves by the source's eccentricity"""
    item = tuple(item)
    held = {source: item}
    frontier = [source]
    rounds = 0
    while frontier:
        nxt = []
        for v in frontier:
            for p in tree.tree_ports[v]:
                u = ctx.graph.neighbor(v, p)
                if u in held:
                    continue
                ctx.send(v, p, item)
                held[u] = item
                nxt.append(u)
        frontier = nxt
        if nxt:
            rounds += 1
    ctx.advance(rounds)
    return held


def broadcast_via_st(graph: PortedGraph, source: int, item: Sequence[int], delta: float = 0.01,
                     fidelity: Fidelity = Fidelity.COST, seed: int = 0,
                     settings: Optional[Settings] = None, tree: Optional[MstOutput] = None,
                     ) -> Tuple[Dict[int, Tuple[int, ...]], MessageLedger]:
    """
    Broadcast item from source over a spanning tree

    Builds the tree with mst unless one is given; the broadcast itself adds
    n - 1 messages.
    """
    ctx = RoutingContext(graph, seed=seed, fidelity=fidelity, settings=settings)
    if tree is None:
        tree = run_mst(ctx, delta)
    if len(tree.roots) > 1:
        raise ProtocolError("broadcast needs a spanning tree, got a forest")
    with ctx.phase("broadcast"):
        held = flood_tree(ctx, tree, source, item)
    return held, ctx.ledger
