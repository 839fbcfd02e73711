"""Silo topologies, Metropolis-Hastings consensus matrices and cycle-time estimates.

Edge-list format::

    # silos N
    i j latency_ms bandwidth_mbps
    ...

Ids lie in ``[0, N)``; edges are undirected. Blank lines and further
``#`` comments are ignored.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

__all__ = [
    "Edge",
    "TopologyGraph",
    "TopologyError",
    "BUILTIN_FILES",
    "BUILTIN_GENERATED",
    "load_topology",
    "parse_topology",
    "format_topology",
    "builtin_topology",
    "ring",
    "star",
    "complete",
    "path",
    "geometric",
    "in_neighbors",
    "build_consensus_matrix",
    "is_doubly_stochastic",
    "spectral_gap",
    "cycle_time_estimate",
    "aggregation_weights",
]

BUILTIN_FILES = {"gaia11": "gaia11.txt", "nws22": "nws22.txt", "exodus79": "exodus79.txt"}
BUILTIN_GENERATED = ("ring", "star", "complete")


class TopologyError(ValueError):
    """Invalid topology file or graph."""


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    latency_ms: float
    bandwidth_mbps: float


@dataclass(frozen=True)
class TopologyGraph:
    n: int
    edges: Tuple[Edge, ...]
    name: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise TopologyError("a topology needs at least one silo")
        seen = set()
        for e in self.edges:
            if not (0 <= e.i < self.n and 0 <= e.j < self.n):
                raise TopologyError(f"edge ({e.i}, {e.j}) references a node outside [0, {self.n})")
            if e.i == e.j:
                raise TopologyError(f"self-loop on node {e.i}")
            key = (min(e.i, e.j), max(e.i, e.j))
            if key in seen:
                raise TopologyError(f"duplicate edge {key}")
            if e.latency_ms < 0 or e.bandwidth_mbps <= 0:
                raise TopologyError(f"edge {key}: latency must be >= 0 and bandwidth > 0")
            seen.add(key)
        comps = self.components()
        if len(comps) > 1:
            listing = "; ".join("{" + ", ".join(map(str, c)) + "}" for c in comps)
            raise TopologyError(f"graph is disconnected, components: {listing}")

    def adjacency(self) -> csr_matrix:
        rows = [e.i for e in self.edges] + [e.j for e in self.edges]
        cols = [e.j for e in self.edges] + [e.i for e in self.edges]
        return csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))

    def components(self) -> List[List[int]]:
        rows = [e.i for e in self.edges]
        cols = [e.j for e in self.edges]
        g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))
        count, labels = connected_components(g, directed=False)
        return [np.flatnonzero(labels == c).tolist() for c in range(count)]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for e in self.edges:
            deg[e.i] += 1
            deg[e.j] += 1
        return deg

    def edge_lookup(self) -> Dict[Tuple[int, int], Edge]:
        out = {}
        for e in self.edges:
            out[(e.i, e.j)] = e
            out[(e.j, e.i)] = e
        return out


_HEADER = re.compile(r"^#\s*silos\s+(\d+)\s*$")


def parse_topology(text: str, name: str = "", source: str = "<string>") -> TopologyGraph:
    n = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER.match(line)
            if m and n is None:
                n = int(m.group(1))
            continue
        if n is None:
            raise TopologyError(f"{source}:{lineno}: edge before '# silos N' header")
        parts = line.split()
        if len(parts) != 4:
            raise TopologyError(f"{source}:{lineno}: expected 'i j latency_ms bandwidth_mbps'")
        try:
            i, j = int(parts[0]), int(parts[1])
            lat, bw = float(parts[2]), float(parts[3])
        except ValueError:
            raise TopologyError(f"{source}:{lineno}: cannot parse {line!r}") from None
        if not (0 <= i < n and 0 <= j < n):
            raise TopologyError(f"{source}:{lineno}: unknown node id in edge ({i}, {j}); ids must be in [0, {n})")
        edges.append(Edge(i, j, lat, bw))
    if n is None:
        raise TopologyError(f"{source}: missing '# silos N' header")
    try:
        return TopologyGraph(n, tuple(edges), name)
    except TopologyError as exc:
        raise TopologyError(f"{source}: {exc}") from None


def load_topology(path) -> TopologyGraph:
    path = Path(path)
    return parse_topology(path.read_text(), name=path.stem, source=str(path))


def format_topology(graph: TopologyGraph) -> str:
    lines = [f"# silos {graph.n}"]
    lines += [f"{e.i} {e.j} {e.latency_ms:g} {e.bandwidth_mbps:g}" for e in graph.edges]
    return "\n".join(lines) + "\n"


def _uniform(n, pairs, name, latency_ms, bandwidth_mbps):
    return TopologyGraph(n, tuple(Edge(i, j, latency_ms, bandwidth_mbps) for i, j in pairs), name)


def ring(n: int, latency_ms: float = 10.0, bandwidth_mbps: float = 100.0) -> TopologyGraph:
    if n < 3:
        return path(n, latency_ms, bandwidth_mbps)
    return _uniform(n, [(i, (i + 1) % n) for i in range(n)], f"ring{n}", latency_ms, bandwidth_mbps)


def path(n: int, latency_ms: float = 10.0, bandwidth_mbps: float = 100.0) -> TopologyGraph:
    return _uniform(n, [(i, i + 1) for i in range(n - 1)], f"path{n}", latency_ms, bandwidth_mbps)


def star(n: int, latency_ms: float = 10.0, bandwidth_mbps: float = 100.0) -> TopologyGraph:
    """Hub is node 0."""
    return _uniform(n, [(0, j) for j in range(1, n)], f"star{n}", latency_ms, bandwidth_mbps)


def complete(n: int, latency_ms: float = 10.0, bandwidth_mbps: float = 100.0) -> TopologyGraph:
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return _uniform(n, pairs, f"complete{n}", latency_ms, bandwidth_mbps)


def geometric(
    n: int,
    extra_degree: float = 1.0,
    seed: int = 0,
    name: str = "",
    bandwidth_choices: Sequence[float] = (100.0, 1000.0, 10000.0),
) -> TopologyGraph:
    """Random planar backbone: minimum spanning tree plus short extra links.

    Silos are scattered in a 4000 km x 2000 km box; latency is fibre
    propagation delay (5 us per km) plus 1 ms switching, bandwidth is drawn
    from ``bandwidth_choices``. About ``extra_degree * n / 2`` extra edges
    connect nearest non-adjacent pairs.
    """
    from scipy.sparse.csgraph import minimum_spanning_tree
    from scipy.spatial.distance import cdist

    rng = np.random.default_rng(seed)
    pts = rng.uniform([0.0, 0.0], [4000.0, 2000.0], size=(n, 2))
    dist = cdist(pts, pts)
    mst = minimum_spanning_tree(csr_matrix(dist)).tocoo()
    pairs = {(min(i, j), max(i, j)) for i, j in zip(mst.row.tolist(), mst.col.tolist())}
    candidates = sorted(
        ((dist[i, j], i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in pairs)
    )
    extra = int(round(extra_degree * n / 2))
    # sample extra links among the shortest candidates to keep the graph local
    pool = candidates[: max(extra * 3, extra)]
    for k in sorted(rng.choice(len(pool), size=min(extra, len(pool)), replace=False).tolist()):
        pairs.add((pool[k][1], pool[k][2]))
    edges = []
    for i, j in sorted(pairs):
        latency = round(1.0 + 0.005 * dist[i, j], 3)
        edges.append(Edge(i, j, latency, float(rng.choice(bandwidth_choices))))
    return TopologyGraph(n, tuple(edges), name)


def builtin_topology(name: str, n: Optional[int] = None) -> TopologyGraph:
    """Bundled graphs (gaia11, nws22, exodus79) or generated ring/star/complete of size ``n``."""
    if name in BUILTIN_FILES:
        text = resources.files("fedcdl").joinpath("topologies").joinpath(BUILTIN_FILES[name]).read_text()
        return parse_topology(text, name=name, source=name)
    if name in BUILTIN_GENERATED:
        if n is None or n < 2:
            raise TopologyError(f"builtin topology {name!r} needs a silo count >= 2")
        return {"ring": ring, "star": star, "complete": complete}[name](n)
    known = ", ".join(list(BUILTIN_FILES) + list(BUILTIN_GENERATED))
    raise TopologyError(f"unknown topology {name!r}; known: {known}")


def in_neighbors(graph: TopologyGraph, silo_id: int) -> Set[int]:
    if not 0 <= silo_id < graph.n:
        raise IndexError(f"silo id {silo_id} out of range [0, {graph.n})")
    out = set()
    for e in graph.edges:
        if e.i == silo_id:
            out.add(e.j)
        elif e.j == silo_id:
            out.add(e.i)
    return out


def build_consensus_matrix(graph: TopologyGraph) -> np.ndarray:
    """Metropolis-Hastings weights: ``1 / (1 + max(d_i, d_j))`` per edge, remainder on the diagonal."""
    deg = graph.degrees()
    a = np.zeros((graph.n, graph.n))
    for e in graph.edges:
        w = 1.0 / (1.0 + max(deg[e.i], deg[e.j]))
        a[e.i, e.j] = w
        a[e.j, e.i] = w
    np.fill_diagonal(a, 1.0 - a.sum(axis=1))
    return a


def is_doubly_stochastic(a: np.ndarray, tol: float = 1e-12) -> bool:
    a = np.asarray(a)
    return bool(
        np.all(a >= 0)
        and np.all(np.abs(a.sum(axis=1) - 1.0) <= tol)
        and np.all(np.abs(a.sum(axis=0) - 1.0) <= tol)
    )


def spectral_gap(a: np.ndarray, tol: float = 1e-10, max_iter: int = 200_000, seed: int = 0) -> float:
    """``1 - |lambda_2|`` of a doubly stochastic matrix by power iteration.

    The all-ones direction (eigenvalue 1) is deflated by projecting every
    iterate onto the mean-zero subspace. ``|lambda_2|`` is read off the
    Rayleigh quotient of ``B^T B`` on the iterate, which is exact for
    symmetric matrices and robust to ``+-lambda`` pairs.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if n == 1:
        return 1.0

    def apply(v):
        w = a @ v
        return w - w.mean()

    v = np.random.default_rng(seed).standard_normal(n)
    v -= v.mean()
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return 1.0
    v /= norm
    est, prev_step = None, None
    for _ in range(max_iter):
        w = apply(v)
        wn = np.linalg.norm(w)
        if wn == 0.0:
            return 1.0
        v = w / wn
        if est is None:
            est = wn
            continue
        # |B v| on a unit iterate converges geometrically to |lambda_2|;
        # extrapolate the remaining error from the ratio of successive steps
        step = wn - est
        est = wn
        remaining = abs(step)
        if prev_step not in (None, 0.0):
            ratio = step / prev_step
            if 0.0 < ratio < 1.0:
                remaining = abs(step) * ratio / (1.0 - ratio)
        prev_step = step
        if remaining <= tol and abs(step) <= tol:
            break
    return float(1.0 - est)


def _edge_ms(e: Edge, model_bytes: int) -> float:
    return e.latency_ms + model_bytes * 8.0 / (e.bandwidth_mbps * 1e3)


def cycle_time_estimate(
    graph: TopologyGraph,
    model_bytes: int,
    local_compute_ms: float,
    scheme: str = "DFL",
    hub: Optional[int] = None,
) -> float:
    """Wall-clock estimate of one communication round in milliseconds.

    DFL: every silo computes, then exchanges with its neighbours in
    parallel; the round ends when the slowest silo's slowest link finishes.

    SFL: every silo uploads to a hub along the lowest-latency path and the
    hub broadcasts back. A link carrying ``c`` models takes
    ``latency + c * bytes * 8 / bandwidth`` per direction, so links near the
    hub become bottlenecks. The hub defaults to the highest-degree silo.
    """
    if model_bytes < 0 or local_compute_ms < 0:
        raise ValueError("model_bytes and local_compute_ms must be non-negative")
    scheme = scheme.upper()
    if scheme == "DFL":
        worst = 0.0
        per_node: Dict[int, float] = {}
        for e in graph.edges:
            t = _edge_ms(e, model_bytes)
            per_node[e.i] = max(per_node.get(e.i, 0.0), t)
            per_node[e.j] = max(per_node.get(e.j, 0.0), t)
        if per_node:
            worst = max(per_node.values())
        return local_compute_ms + worst
    if scheme != "SFL":
        raise ValueError(f"unknown scheme {scheme!r}; expected 'SFL' or 'DFL'")
    if graph.n == 1:
        return local_compute_ms
    if hub is None:
        hub = int(np.argmax(graph.degrees()))
    lookup = graph.edge_lookup()
    rows = [e.i for e in graph.edges] + [e.j for e in graph.edges]
    cols = [e.j for e in graph.edges] + [e.i for e in graph.edges]
    # small constant keeps zero-latency edges present in the sparse matrix
    lat = [e.latency_ms + 1e-9 for e in graph.edges] * 2
    g = csr_matrix((lat, (rows, cols)), shape=(graph.n, graph.n))
    _, pred = dijkstra(g, directed=False, indices=hub, return_predecessors=True)
    load: Dict[Tuple[int, int], int] = {}
    paths = {}
    for s in range(graph.n):
        if s == hub:
            continue
        hops, node = [], s
        while node != hub:
            parent = int(pred[node])
            key = (min(node, parent), max(node, parent))
            hops.append(key)
            load[key] = load.get(key, 0) + 1
            node = parent
        paths[s] = hops
    one_way = 0.0
    for s, hops in paths.items():
        t = sum(
            lookup[k].latency_ms + load[k] * model_bytes * 8.0 / (lookup[k].bandwidth_mbps * 1e3) for k in hops
        )
        one_way = max(one_way, t)
    return local_compute_ms + 2.0 * one_way


def aggregation_weights(counts: Sequence[int], participating: Optional[Sequence[bool]] = None) -> np.ndarray:
    """Sample-count weights over participating silos, summing to one."""
    counts = np.asarray(counts, dtype=np.float64)
    mask = np.ones_like(counts) if participating is None else np.asarray(participating, dtype=np.float64)
    if counts.shape != mask.shape:
        raise ValueError("counts and participation mask must have the same length")
    raw = counts * mask
    total = raw.sum()
    if total <= 0:
        raise ValueError("no participating silo holds data")
    return raw / total
