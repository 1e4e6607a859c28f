"""
Graph text formats for qroute
Reads and writes the edge-list file format and parses generator specs
such as ``random n=32 m=80 weighted=1``.
"""

import re
from pathlib import Path
from typing import Callable, Dict, List, Tuple, Union

from . import graphs
from .errors import GraphError
from .graphs import PortedGraph

HEADER_PATTERN = re.compile(r"^\s*(\d+)\s+(\d+)\s+([01])\s*$")
# u v, then optional explicit ports pu pv, then an optional weight
EDGE_PATTERN = re.compile(r"^\s*(\d+)\s+(\d+)(?:\s+(\d+)\s+(\d+))?(?:\s+(\S+))?\s*$")
PARAM_PATTERN = re.compile(r"^(\w+)=(\S+)$")

# Generator name -> (factory, required params, optional params)
GENERATORS: Dict[str, Tuple[Callable, Tuple[str, ...], Tuple[str, ...]]] = {
    "path": (graphs.gen_path, ("n",), ("weighted", "seed")),
    "star": (graphs.gen_star, ("n",), ("weighted", "seed")),
    "complete": (graphs.gen_complete, ("n",), ("weighted", "seed")),
    "grid": (graphs.gen_grid, ("rows", "cols"), ("weighted", "seed")),
    "random": (graphs.gen_random_connected, ("n", "m"), ("weighted", "seed")),
    "two-cliques-joined": (graphs.gen_two_cliques_joined, ("k",), ("weighted", "seed")),
    "two-cliques": (graphs.gen_two_cliques_crossed, ("n",), ("bridge",)),
    "bfs-hard": (graphs.gen_bfs_hard_instance, ("n", "d"), ("perm_seed",)),
}


def read_graph(path: Union[str, Path]) -> PortedGraph:
    """
    Read a graph file: header ``n m weighted`` then one ``u v [pu pv] [w]`` line per edge

    Blank lines and lines starting with '#' are skipped. Without the port
    columns port order is file order; with them every line names the port of
    the edge at u and at v, and either all lines carry ports or none does.
    """
    lines = [
        line for line in Path(path).read_text().splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not lines:
        raise GraphError(f"{path}: empty graph file")
    header = HEADER_PATTERN.match(lines[0])
    if not header:
        raise GraphError(f"{path}: bad header {lines[0]!r}, expected 'n m weighted'")
    n, m, weighted = int(header.group(1)), int(header.group(2)), header.group(3) == "1"

    edges: List[tuple] = []
    ported = None
    for lineno, line in enumerate(lines[1:], start=2):
        match = EDGE_PATTERN.match(line)
        if not match:
            raise GraphError(f"{path}: line {lineno}: cannot parse {line!r}")
        u, v, pu, pv, w = match.groups()
        u, v = int(u), int(v)
        if weighted and w is None:
            raise GraphError(f"{path}: line {lineno}: missing weight", edge=(u, v))
        if not weighted and w is not None:
            raise GraphError(f"{path}: line {lineno}: weight given in unweighted file", edge=(u, v))
        has_ports = pu is not None
        if ported is None:
            ported = has_ports
        elif ported != has_ports:
            raise GraphError(f"{path}: line {lineno}: mixes lines with and without ports", edge=(u, v))
        item = (u, v, int(pu), int(pv)) if has_ports else (u, v)
        if weighted:
            try:
                item += (float(w),)
            except ValueError:
                raise GraphError(f"{path}: line {lineno}: cannot parse weight {w!r}", edge=(u, v)) from None
        edges.append(item)
    if len(edges) != m:
        raise GraphError(f"{path}: header announces {m} edges, found {len(edges)}")
    if ported:
        return graphs.build_from_port_list(edges, n)
    return graphs.build_from_edge_list(edges, n)


def format_graph(graph: PortedGraph) -> str:
    """File text; port columns are written only when file order cannot reproduce the ports"""
    weighted = graph.is_weighted
    ported = not graphs.ports_follow_edge_order(graph)
    slot = {(v, u): p for v in range(graph.n) for p, u in enumerate(graph.port_map[v], start=1)}
    out = [f"{graph.n} {graph.m} {int(weighted)}"]
    for u, v in graph.edges():
        line = f"{u} {v} {slot[(u, v)]} {slot[(v, u)]}" if ported else f"{u} {v}"
        out.append(f"{line} {graph.weight(u, v):.17g}" if weighted else line)
    return "\n".join(out) + "\n"


def write_graph(graph: PortedGraph, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_graph(graph))
    return path


def _coerce(name: str, raw: str):
    if name == "bridge":
        parts = [int(x) for x in raw.split(",")]
        if len(parts) != 4:
            raise GraphError(f"bridge needs four comma-separated ids, got {raw!r}")
        return tuple(parts)
    if name == "weighted":
        if raw.lower() not in {"0", "1", "true", "false", "yes", "no"}:
            raise GraphError(f"weighted must be a boolean, got {raw!r}")
        return raw.lower() in {"1", "true", "yes"}
    try:
        return int(raw)
    except ValueError:
        raise GraphError(f"parameter {name} must be an integer, got {raw!r}") from None


def parse_gen_spec(tokens: List[str]) -> Tuple[str, Dict[str, object]]:
    """
    Parse ``NAME k=v ...`` into a generator name and typed keyword arguments

    Returns:
        tuple: (generator name, kwargs)
    """
    if not tokens:
        raise GraphError("generator spec is empty")
    name, params = tokens[0], {}
    if name not in GENERATORS:
        raise GraphError(f"unknown generator {name!r}; choose from {', '.join(sorted(GENERATORS))}")
    _, required, optional = GENERATORS[name]
    for token in tokens[1:]:
        match = PARAM_PATTERN.match(token)
        if not match:
            raise GraphError(f"generator parameter {token!r} is not key=value")
        key, raw = match.groups()
        if key not in required + optional:
            raise GraphError(f"generator {name!r} takes no parameter {key!r}")
        params[key] = _coerce(key, raw)
    missing = [k for k in required if k not in params]
    if missing:
        raise GraphError(f"generator {name!r} needs {', '.join(missing)}")
    return name, params


def generate(name: str, params: Dict[str, object]) -> Tuple[PortedGraph, int]:
    """Run a named generator; returns (graph, natural root)"""
    factory = GENERATORS[name][0]
    result = factory(**params)
    if isinstance(result, tuple):
        return result
    return result, 0
