"""
Command line for qroute
Validation, single runs, parameter sweeps, lower-bound enumerations and the
recorded run history; every output embeds its configuration and graph hash.
"""

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from pydantic import ValidationError
from scipy import stats

from . import crud
from .bfs import audit_cover, bfs, oracle_bfs_layers, sparse_cover
from .config import Settings, get_settings
from .crud import CSV_FIELDS, CSV_SCHEMA, RunConfig
from .database import SessionLocal, init_db
from .errors import BudgetRefusal, GraphError, InvariantViolation, QRouteError, UsageError
from .graphio import PARAM_PATTERN, generate, parse_gen_spec, read_graph, write_graph
from .graphs import (
    ElectricNetwork, PortedGraph, effective_resistance, gen_random_connected, graph_hash, to_networkx,
    validate,
)
from .ledger import MessageLedger
from .lowerbound import bfs_relation_params, connectivity_relation_params, connectivity_separation
from .mst import broadcast_via_st, leader_election, mst, oracle_mst_edges
from .primitives import ClusterState, OutgoingEdge, find_any, find_min
from .scheduler import SchedulingMode, WalkRequest
from .simulator import RoutingContext, split_rng
from .walk import Fidelity

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3

ALGORITHMS = ("mst", "le", "broadcast", "bfs", "cover", "findany", "findmin", "walk-detect")

# Edge count per sweep point as a function of n
M_RULES: Dict[str, Callable[[int], int]] = {
    "complete": lambda n: n * (n - 1) // 2,
    "half": lambda n: max(n - 1, n * (n - 1) // 4),
    "sqrt": lambda n: min(n * (n - 1) // 2, max(n - 1, round(n ** 1.5))),
    "linear": lambda n: min(n * (n - 1) // 2, 2 * n),
}


@dataclass
class RunResult:
    record: dict
    ledger: MessageLedger
    fidelity: Fidelity
    violations: List[str] = field(default_factory=list)

    @property
    def status(self) -> str:
        return "ok" if not self.violations else "violation"


# ==================== INPUTS ====================

def build_settings(assignments: Sequence[str]) -> Settings:
    """Apply ``name=value`` overrides to the environment settings"""
    updates = {}
    for item in assignments or ():
        match = PARAM_PATTERN.match(item)
        if not match:
            raise UsageError(f"--set expects name=value, got {item!r}")
        updates[match.group(1)] = match.group(2)
    try:
        return get_settings().override(updates)
    except KeyError as err:
        raise UsageError(err.args[0]) from None
    except ValidationError as err:
        raise UsageError(f"invalid constant: {err.errors()[0]['msg']}") from None


def load_graph(args) -> Tuple[PortedGraph, int, str]:
    """Graph, its natural root and the source description for the manifest"""
    if args.graph and args.gen:
        raise UsageError("give either --graph or --gen, not both")
    if args.graph:
        return read_graph(args.graph), 0, str(args.graph)
    if args.gen:
        name, params = parse_gen_spec(args.gen)
        graph, root = generate(name, params)
        return graph, root, "gen " + " ".join(args.gen)
    raise UsageError("a graph is required: --graph FILE or --gen NAME k=v ...")


def resolve_fidelity(name: str, n: int, settings: Settings) -> Fidelity:
    if name == "auto":
        return Fidelity.EXACT if n <= settings.exact_node_limit else Fidelity.COST
    return Fidelity.EXACT if name == "exact" else Fidelity.COST


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (set, frozenset, tuple)):
        return list(value)
    if hasattr(value, "value"):
        return value.value
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)


# ==================== ALGORITHM RUNNERS ====================

def make_clusters(ctx: RoutingContext, mode: str) -> List[ClusterState]:
    """Singleton clusters, one cluster per component, or per component of each node half"""
    graph = ctx.graph
    if mode == "singletons":
        return [ClusterState.singleton(v, ctx.ids) for v in range(graph.n)]
    if mode == "whole":
        groups = [range(graph.n)]
    elif mode == "halves":
        groups = [range(graph.n // 2), range(graph.n // 2, graph.n)]
    else:
        raise UsageError(f"unknown cluster layout {mode!r}")
    g = to_networkx(graph)
    clusters = []
    for group in groups:
        sub = g.subgraph(group)
        for component in sorted(nx.connected_components(sub), key=min):
            root = min(component)
            parents = {root: None, **dict(nx.bfs_predecessors(sub.subgraph(component), root))}
            clusters.append(ClusterState.from_parents(graph, ctx.ids, parents))
    return clusters


def _outgoing(graph: PortedGraph, cluster: ClusterState) -> List[Tuple[int, int]]:
    """(rank, edge index) of every edge leaving the cluster"""
    members = set(cluster.members)
    table = graph.edge_table
    out = []
    for v in cluster.members:
        for p, u in enumerate(graph.port_map[v], start=1):
            if u not in members:
                e = int(table.port_edge[v][p - 1])
                out.append((int(table.rank[e]), e))
    return sorted(out)


def _edge_record(edge: Optional[OutgoingEdge]) -> Optional[dict]:
    if edge is None:
        return None
    return {"node": edge.node, "port": edge.port, "neighbor": edge.neighbor,
            "weight": edge.weight, "rank": edge.rank}


def run_outgoing(graph: PortedGraph, cfg: RunConfig, fidelity: Fidelity, settings: Settings,
                 minimum: bool) -> RunResult:
    ctx = RoutingContext(graph, seed=cfg.seed, fidelity=fidelity, settings=settings, audit=cfg.audit)
    clusters = make_clusters(ctx, cfg.clusters)
    n_star = cfg.n_star or max(c.size for c in clusters)
    search = find_min if minimum else find_any
    found = search(ctx, clusters, n_star, cfg.delta)
    violations = []
    for cluster, edge in zip(clusters, found):
        if cluster.size > n_star:
            continue
        leaving = _outgoing(graph, cluster)
        if edge is None:
            if leaving:
                violations.append(f"cluster rooted at {cluster.root} missed its outgoing edges")
            continue
        if edge.node not in cluster.members or edge.neighbor in cluster.members:
            violations.append(f"cluster rooted at {cluster.root} returned an inner edge {edge}")
        elif minimum and edge.rank != leaving[0][0]:
            violations.append(f"cluster rooted at {cluster.root} returned rank {edge.rank}, "
                              f"minimum is {leaving[0][0]}")
    networks = ctx.audits_of("find-any-network")
    for audit in networks:
        data = audit.data
        resistance = data["effective_resistance"]
        if data["total_weight"] > data["W"] * (1 + 1e-12) or (
                resistance is not None and resistance > data["R"] * (1 + 1e-9)):
            violations.append(f"find-any network out of bounds: {data}")
    record = {
        "clusters": [{"root": c.root, "size": c.size, "edge": _edge_record(e)} for c, e in zip(clusters, found)],
        "n_star": n_star,
        "networks_audited": len(networks),
    }
    return RunResult(record, ctx.ledger, fidelity, violations)


def run_mst_algorithm(graph: PortedGraph, cfg: RunConfig, fidelity: Fidelity, settings: Settings) -> RunResult:
    output, ledger = mst(graph, cfg.delta, fidelity, cfg.seed, settings, terminate=cfg.terminate,
                         audit=cfg.audit)
    edges = output.edges(graph)
    violations = []
    if graph.is_weighted:
        oracle = oracle_mst_edges(graph)
        if edges != oracle:
            violations.append(f"MST differs from the oracle in {len(edges ^ oracle)} edge(s)")
    elif len(edges) != graph.n - 1 or len(output.roots) != 1:
        violations.append(f"expected a spanning tree, got {len(edges)} edges in {len(output.roots)} fragments")
    record = {
        "root": output.root, "fragment_id": output.fragment_id,
        "edges": sorted(edges), "tree_ports": output.tree_ports,
        "phases": output.phases, "subphases": output.subphases, "aborts": output.aborts,
    }
    return RunResult(record, ledger, fidelity, violations)


def run_le(graph: PortedGraph, cfg: RunConfig, fidelity: Fidelity, settings: Settings) -> RunResult:
    output, ledger = leader_election(graph, cfg.delta, fidelity, cfg.seed, settings)
    components = graph.component_count()
    violations = []
    if len(output.leaders) != components:
        violations.append(f"{len(output.leaders)} leaders for {components} component(s)")
    record = {"leaders": output.leaders, "status": {v: s.value for v, s in output.status.items()}}
    return RunResult(record, ledger, fidelity, violations)


def run_broadcast(graph: PortedGraph, cfg: RunConfig, fidelity: Fidelity, settings: Settings) -> RunResult:
    held, ledger = broadcast_via_st(graph, cfg.root, (1,), cfg.delta, fidelity, cfg.seed, settings)
    missing = sorted(set(range(graph.n)) - set(held))
    violations = [f"{len(missing)} node(s) never received the item"] if missing else []
    return RunResult({"source": cfg.root, "reached": len(held)}, ledger, fidelity, violations)


def run_bfs_algorithm(graph: PortedGraph, cfg: RunConfig, fidelity: Fidelity, settings: Settings) -> RunResult:
    output, ledger = bfs(graph, cfg.root, cfg.delta, fidelity, cfg.seed, settings, n_known=cfg.n_known,
                         audit=cfg.audit)
    oracle = oracle_bfs_layers(graph, cfg.root)
    wrong = [v for v, dist in oracle.items() if output.layer.get(v) != dist]
    violations = [f"{len(wrong)} node(s) have a layer different from their distance"] if wrong else []
    record = {"root": output.root, "phases": output.phases, "cover_trees": output.cover_trees,
              "max_grover_invocations": max(output.grover_invocations.values(), default=0),
              "nodes": output.records()}
    return RunResult(record, ledger, fidelity, violations)


def run_cover(graph: PortedGraph, cfg: RunConfig, fidelity: Fidelity, settings: Settings) -> RunResult:
    kappa = cfg.kappa or max(1, math.ceil(math.log2(max(graph.n, 2))))
    cover, ledger = sparse_cover(graph, kappa, cfg.W, fidelity, cfg.seed, settings)
    audit = audit_cover(graph, cover)
    violations = []
    if not audit.depth_ok:
        violations.append(f"tree depth {audit.max_depth} exceeds {audit.depth_limit}")
    if not audit.sparsity_ok:
        violations.append(f"membership {audit.max_membership} exceeds {audit.membership_limit}")
    if not audit.neighborhood_ok:
        violations.append(f"{len(audit.uncovered)} node(s) have no tree holding their neighborhood")
    record = {
        "kappa": kappa, "W": cfg.W, "rates": cover.rates, "trees": cover.records(),
        "audit": {"max_depth": audit.max_depth, "depth_constant": audit.depth_constant,
                  "max_membership": audit.max_membership, "sparsity_constant": audit.sparsity_constant,
                  "uncovered": list(audit.uncovered)},
    }
    return RunResult(record, ledger, fidelity, violations)


def run_walk_detect(graph: PortedGraph, cfg: RunConfig, fidelity: Fidelity, settings: Settings) -> RunResult:
    """One detection walk over the whole graph; R is the series resistance of all edges"""
    net = ElectricNetwork.build([(u, v, graph.weight(u, v)) for u, v in graph.edges()], cfg.root,
                                cfg.marked, token=("walk-detect", cfg.root), base=graph)
    R = max(1.0, sum(1 / w for _, _, w in net.edges))
    W = max(1.0, sum(w for _, _, w in net.edges))
    ctx = RoutingContext(graph, seed=cfg.seed, fidelity=fidelity, settings=settings)
    with ctx.phase("walk-detect"):
        outcome = ctx.run_walks([WalkRequest(net, R, W, cfg.delta)], SchedulingMode.EXCLUSIVE, [cfg.root])
    result = outcome.results[0]
    expected = "nonempty" if net.has_reachable_marked() else "empty"
    violations = [] if result.verdict.value == expected else [f"verdict {result.verdict.value}, expected {expected}"]
    record = {"verdict": result.verdict.value, "repetitions": result.repetitions,
              "walk_length": result.walk_length, "ones": result.ones, "probability": result.probability,
              "R": R, "W": W}
    return RunResult(record, ctx.ledger, fidelity, violations)


RUNNERS: Dict[str, Callable[..., RunResult]] = {
    "mst": run_mst_algorithm,
    "le": run_le,
    "broadcast": run_broadcast,
    "bfs": run_bfs_algorithm,
    "cover": run_cover,
    "findany": lambda g, c, f, s: run_outgoing(g, c, f, s, minimum=False),
    "findmin": lambda g, c, f, s: run_outgoing(g, c, f, s, minimum=True),
    "walk-detect": run_walk_detect,
}


def execute(graph: PortedGraph, cfg: RunConfig, settings: Settings) -> RunResult:
    if cfg.algorithm not in RUNNERS:
        raise UsageError(f"unknown algorithm {cfg.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
    if not 0 <= cfg.root < graph.n:
        raise UsageError(f"root {cfg.root} is not a node of a {graph.n}-node graph")
    fidelity = resolve_fidelity(cfg.fidelity, graph.n, settings)
    result = RUNNERS[cfg.algorithm](graph, cfg, fidelity, settings)
    if cfg.rounds_cap is not None and result.ledger.rounds > cfg.rounds_cap:
        raise BudgetRefusal(f"run took {result.ledger.rounds} rounds, cap is {cfg.rounds_cap}",
                            budget=cfg.rounds_cap, requested=result.ledger.rounds)
    return result


# ==================== PERSISTENCE ====================

def record_run(export: crud.LedgerExport, fidelity: str, digest: str, cfg: Optional[RunConfig],
               status: str, sweep_id: Optional[str] = None, grid: Optional[dict] = None) -> None:
    init_db()
    db = SessionLocal()
    try:
        sweep = crud.save_sweep(db, sweep_id, export.algorithm, grid or {}) if sweep_id else None
        crud.save_run(db, export, fidelity, digest, config=cfg, status=status, sweep=sweep)
    finally:
        db.close()


# ==================== COMMANDS ====================

def cmd_validate(args) -> int:
    try:
        graph, _, source = load_graph(args)
    except GraphError as err:
        print(dumps({"graph": args.graph or " ".join(args.gen or ()), "violations": [str(err)]}))
        return EXIT_VIOLATION
    violations = validate(graph)
    print(dumps({"graph": source, "graph_hash": graph_hash(graph), "n": graph.n, "m": graph.m,
                 "violations": violations}))
    return EXIT_VIOLATION if violations else EXIT_OK


def cmd_effres(args) -> int:
    graph, root, _ = load_graph(args)
    root = args.root if args.root is not None else root
    settings = build_settings(args.set)
    net = ElectricNetwork.build([(u, v, graph.weight(u, v)) for u, v in graph.edges()], root,
                                args.marked, base=graph)
    value = effective_resistance(net, settings)
    print(dumps({"root": root, "marked": sorted(args.marked), "effective_resistance": value,
                 "graph_hash": graph_hash(graph)}))
    return EXIT_OK


def _run_config(args, source: str, root: int) -> RunConfig:
    overrides = dict(PARAM_PATTERN.match(item).groups() for item in args.set or () if PARAM_PATTERN.match(item))
    return RunConfig(
        algorithm=args.algorithm, graph=source, root=root, seed=args.seed, delta=args.delta,
        fidelity=args.fidelity, rounds_cap=args.rounds_cap, overrides=overrides,
        n_known=not args.n_unknown, terminate=args.terminate, audit=args.audit,
        kappa=args.kappa, W=args.W, clusters=args.clusters, n_star=args.n_star, marked=args.marked,
    )


def cmd_run(args) -> int:
    settings = build_settings(args.set)
    graph, natural_root, source = load_graph(args)
    root = args.root if args.root is not None else natural_root
    cfg = _run_config(args, source, root)
    digest = graph_hash(graph)
    result = execute(graph, cfg, settings)

    run_id = f"{cfg.algorithm}-{digest[:12]}-s{cfg.seed}"
    export = result.ledger.export(run_id, cfg.seed, graph.n, graph.m, cfg.algorithm)
    envelope = {"config": cfg.model_dump(), "graph_hash": digest}
    manifest = {**envelope, "run_id": run_id, "fidelity": result.fidelity.value, "n": graph.n, "m": graph.m,
                "constants": settings.model_dump(exclude={"database_url"}), "status": result.status,
                "violations": result.violations}
    record = {**manifest, "ledger": export.model_dump(), "result": result.record}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(dumps({**envelope, "result": result.record}))
        (out / "ledger.json").write_text(dumps({**envelope, "ledger": export.model_dump()}))
        (out / "manifest.json").write_text(dumps(manifest))
        print(dumps({"run_id": run_id, "status": result.status, "out": str(out),
                     "messages": export.messages.model_dump(), "rounds": export.rounds}))
    else:
        print(dumps(record))
    if args.json:
        Path(args.json).write_text(dumps(record))
    if args.csv:
        write_csv(args.csv, [(export, digest, cfg)])
    if args.record:
        record_run(export, result.fidelity.value, digest, cfg, result.status)
    for violation in result.violations:
        log.error("%s: %s", run_id, violation)
    return EXIT_VIOLATION if result.violations else EXIT_OK


def write_csv(path: Optional[str], rows: Sequence[Tuple[crud.LedgerExport, str, RunConfig]]) -> None:
    """Schema comment, header and one line per (export, graph hash, config); stdout without a path"""
    handle = open(path, "w", newline="") if path else sys.stdout
    try:
        handle.write(f"# {CSV_SCHEMA}\n")
        writer = csv.writer(handle)
        writer.writerow(CSV_FIELDS)
        for export, digest, cfg in rows:
            writer.writerow(export.csv_row(digest, cfg))
    finally:
        if path:
            handle.close()


def _sweep_one(task: dict) -> dict:
    """Worker body: build the graph, run, return the ledger export row"""
    settings = Settings.model_validate(task["settings"])
    weighted = task["algorithm"] in ("mst", "le", "broadcast", "findmin")
    graph = gen_random_connected(task["n"], task["m"], weighted=weighted, seed=task["seed"])
    cfg = RunConfig(algorithm=task["algorithm"], graph=f"gen random n={task['n']} m={task['m']}",
                    seed=task["seed"], delta=task["delta"], fidelity=task["fidelity"])
    result = execute(graph, cfg, settings)
    export = result.ledger.export(task["run_id"], task["seed"], graph.n, graph.m, task["algorithm"])
    return {"export": export.model_dump(), "status": result.status, "fidelity": result.fidelity.value,
            "graph_hash": graph_hash(graph), "config": cfg.model_dump()}


def fit_slope(x: Sequence[float], y: Sequence[float], confidence: float = 0.95) -> Optional[dict]:
    """Least-squares slope of log y against log x with a confidence interval"""
    x, y = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    if len(np.unique(x)) < 2:
        return None
    fit = stats.linregress(x, y)
    dof = len(x) - 2
    half = float(stats.t.ppf(0.5 + confidence / 2, dof) * fit.stderr) if dof > 0 else float("nan")
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "ci_low": float(fit.slope - half),
            "ci_high": float(fit.slope + half), "points": int(len(x)), "confidence": confidence}


def sweep_tasks(args, settings: Settings) -> List[dict]:
    sizes = [int(x) for x in args.n.split(",") if x.strip()] if args.n else []
    if not sizes or args.reps < 1:
        raise UsageError("empty grid")
    tasks = []
    index = 0
    for n in sizes:
        m = M_RULES[args.m_rule](n)
        for rep in range(args.reps):
            seed = int(split_rng(args.seed, index).integers(2 ** 63))
            tasks.append({
                "run_id": f"{args.algorithm}-n{n:05d}-m{m:07d}-r{rep:03d}", "algorithm": args.algorithm,
                "n": n, "m": m, "seed": seed, "delta": args.delta, "fidelity": args.fidelity,
                "settings": settings.model_dump(),
            })
            index += 1
    return tasks


def cmd_sweep(args) -> int:
    settings = build_settings(args.set)
    tasks = sweep_tasks(args, settings)
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(task) for task in tasks]
    rows.sort(key=lambda r: r["export"]["run_id"])

    exports = [crud.LedgerExport.model_validate(r["export"]) for r in rows]
    totals = [max(1, e.messages.total) for e in exports]
    summary = {
        "schema": CSV_SCHEMA, "algorithm": args.algorithm, "m_rule": args.m_rule, "seed": args.seed,
        "runs": len(rows), "violations": sum(1 for r in rows if r["status"] != "ok"),
        "slope_vs_n": fit_slope([e.n for e in exports], totals),
        "slope_vs_sqrt_mn": fit_slope([math.sqrt(e.m * e.n) for e in exports], totals),
    }

    write_csv(args.csv, [(export, row["graph_hash"], RunConfig.model_validate(row["config"]))
                         for row, export in zip(rows, exports)])
    if args.summary:
        Path(args.summary).write_text(dumps(summary))
    else:
        print(dumps(summary), file=sys.stderr if not args.csv else sys.stdout)

    if args.record:
        sweep_id = f"{args.algorithm}-{args.m_rule}-s{args.seed}"
        grid = {"n": args.n, "m_rule": args.m_rule, "reps": args.reps}
        for row, export in zip(rows, exports):
            record_run(export, row["fidelity"], row["graph_hash"], RunConfig.model_validate(row["config"]),
                       row["status"], sweep_id=sweep_id, grid=grid)
        init_db()
        db = SessionLocal()
        try:
            crud.save_sweep(db, sweep_id, args.algorithm, grid, summary)
        finally:
            db.close()
    return EXIT_VIOLATION if summary["violations"] else EXIT_OK


def _lb_params(tokens: Sequence[str]) -> Dict[str, int]:
    params = {}
    for token in tokens:
        match = PARAM_PATTERN.match(token)
        if not match:
            raise UsageError(f"lower-bound parameter {token!r} is not key=value")
        try:
            params[match.group(1)] = int(match.group(2))
        except ValueError:
            raise UsageError(f"lower-bound parameter {token!r} must be an integer") from None
    return params


LB_PARAMS = {"connectivity": ({"n"}, set()), "bfs": ({"n", "d"}, {"perm_seed"})}


def cmd_lb(args) -> int:
    settings = build_settings(args.set)
    params = _lb_params(args.params)
    required, optional = LB_PARAMS[args.family]
    missing = sorted(required - set(params))
    unexpected = sorted(set(params) - required - optional)
    if missing or unexpected:
        raise UsageError(f"{args.family} takes {', '.join(sorted(required | optional))}; "
                         f"missing {missing}, unexpected {unexpected}")
    violations = []
    separation = None
    if args.family == "connectivity":
        relation = connectivity_relation_params(params["n"], settings=settings)
        if relation.extras["max_l_x"] > relation.extras["l_x_limit"]:
            violations.append("per-query l exceeds n^2")
        if args.audit:
            separation = connectivity_separation(params["n"])
            if separation["bridged_diameter_3"] != separation["bridged"]:
                violations.append("a bridged encoding is not connected with diameter 3")
            if separation["unbridged_components"] != 2:
                violations.append("unbridged instance is not two components")
    else:
        relation = bfs_relation_params(params["n"], params["d"], params.get("perm_seed", 0), settings=settings)
        if relation.l_max > relation.extras["l_max_limit"]:
            violations.append("l_max exceeds d^3")

    payload = {"relation": relation.model_dump(), "violations": violations}
    if separation is not None:
        payload["separation"] = separation
    text = dumps(payload)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    if args.record:
        init_db()
        db = SessionLocal()
        try:
            crud.save_relation(db, relation.family, relation.params, relation.m_lower, relation.m_prime,
                               relation.l_max, relation.bound, relation.extras)
        finally:
            db.close()
    return EXIT_VIOLATION if violations else EXIT_OK


def cmd_gen(args) -> int:
    name, params = parse_gen_spec(args.spec)
    graph, root = generate(name, params)
    path = write_graph(graph, args.out)
    written = read_graph(path)
    digest = graph_hash(written)
    if digest != graph_hash(graph):
        raise InvariantViolation(f"{path} does not read back as the generated graph")
    print(dumps({"out": str(path), "n": written.n, "m": written.m, "root": root, "graph_hash": digest}))
    return EXIT_OK


def cmd_history(args) -> int:
    init_db()
    db = SessionLocal()
    try:
        runs = crud.runs_for_sweep(db, args.sweep) if args.sweep else crud.list_runs(db, args.algorithm, args.limit)
        print(dumps([crud.RunResponse.model_validate(r).model_dump(mode="json") for r in runs]))
    finally:
        db.close()
    return EXIT_OK


# ==================== PARSER ====================

def _add_graph_source(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--graph", type=Path, help="Graph file: header 'n m weighted', then 'u v [w]' lines")
    parser.add_argument("--gen", nargs="+", metavar="TOKEN", help="Generator spec, e.g. --gen random n=32 m=80")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--delta", type=float, default=0.01)
    parser.add_argument("--fidelity", choices=("auto", "exact", "cost"), default="auto")
    parser.add_argument("--set", action="append", metavar="NAME=VALUE", help="Override a constant; repeatable")
    parser.add_argument("--record", action="store_true", help="Store results in the results database")


def _node_list(raw: str) -> List[int]:
    try:
        return [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated node ids, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qroute", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="Check port symmetry, simplicity and weights")
    _add_graph_source(p)
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("effres", help="Effective resistance between a root and a marked set")
    _add_graph_source(p)
    p.add_argument("--root", type=int)
    p.add_argument("--marked", type=_node_list, required=True)
    p.add_argument("--set", action="append", metavar="NAME=VALUE")
    p.set_defaults(handler=cmd_effres)

    p = sub.add_parser("run", help="Run one algorithm and audit its output")
    p.add_argument("algorithm", choices=ALGORITHMS)
    _add_graph_source(p)
    _add_common(p)
    p.add_argument("--root", type=int)
    p.add_argument("--out", help="Directory for result.json, ledger.json and manifest.json")
    p.add_argument("--json", help="Write the full run record to this file")
    p.add_argument("--csv", help="Write the ledger as a one-line sweep CSV")
    p.add_argument("--rounds-cap", type=int)
    p.add_argument("--n-unknown", action="store_true", help="BFS learns n through an MST first")
    p.add_argument("--terminate", choices=("detect", "fixed"), default="detect")
    p.add_argument("--audit", action="store_true", help="Record network and fragment audits")
    p.add_argument("--kappa", type=int)
    p.add_argument("--W", type=int, default=1)
    p.add_argument("--clusters", choices=("singletons", "whole", "halves"), default="singletons")
    p.add_argument("--n-star", type=int)
    p.add_argument("--marked", type=_node_list, default=[])
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("sweep", help="Run an algorithm over a grid of random graphs")
    p.add_argument("algorithm", choices=ALGORITHMS)
    _add_common(p)
    p.set_defaults(fidelity="cost")
    p.add_argument("--n", help="Comma-separated node counts")
    p.add_argument("--m-rule", choices=sorted(M_RULES), default="complete")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", help="CSV output file (stdout by default)")
    p.add_argument("--summary", help="Slope summary JSON file")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("lb", help="Enumerate adversary-bound parameters")
    p.add_argument("family", choices=("bfs", "connectivity"))
    p.add_argument("params", nargs="*", metavar="K=V")
    p.add_argument("--audit", action="store_true", help="Also check connectivity and diameters")
    p.add_argument("--out")
    p.add_argument("--set", action="append", metavar="NAME=VALUE")
    p.add_argument("--record", action="store_true")
    p.set_defaults(handler=cmd_lb)

    p = sub.add_parser("gen", help="Write a generated graph to a file")
    p.add_argument("spec", nargs="+", metavar="TOKEN")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("history", help="List recorded runs")
    p.add_argument("--algorithm")
    p.add_argument("--sweep")
    p.add_argument("--limit", type=int, default=50)
    p.set_defaults(handler=cmd_history)
    return parser


def configure_logging(args) -> None:
    level = get_settings().log_level
    if args.verbose:
        level = "DEBUG"
    elif args.quiet:
        level = "WARNING"
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    configure_logging(args)
    try:
        return args.handler(args)
    except BudgetRefusal as err:
        print(f"[error] {err}", file=sys.stderr)
        return EXIT_BUDGET
    except InvariantViolation as err:
        print(f"[error] {err}", file=sys.stderr)
        return EXIT_VIOLATION
    except (UsageError, GraphError) as err:
        print(f"[error] {err}", file=sys.stderr)
        return EXIT_USAGE
    except QRouteError as err:
        print(f"[error] {err}", file=sys.stderr)
        return EXIT_VIOLATION
