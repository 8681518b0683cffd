"""Configuration-model multigraphs, neighbourhoods and ball puncturing."""
from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ResourceError
from .moments import PuncturedCensus


class Graph:
    """Undirected multigraph on vertices 0..n-1, loops allowed.

    For the hardcore constraint a loop forbids its vertex and parallel
    edges count once, so neighbour lists are deduplicated.
    """

    def __init__(self, n: int, edges):
        self.n = int(n)
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        self.edges = e
        self.loop = np.zeros(self.n, dtype=bool)
        self.loop[e[e[:, 0] == e[:, 1], 0]] = True
        self.degree = (np.bincount(e[:, 0], minlength=self.n)
                       + np.bincount(e[:, 1], minlength=self.n))
        nb = [set() for _ in range(self.n)]
        for u, v in e:
            if u != v:
                nb[u].add(int(v))
                nb[v].add(int(u))
        self._nbrs = [sorted(s) for s in nb]

    def neighbors(self, v: int) -> list:
        return self._nbrs[v]

    def csr(self):
        ptr = np.zeros(self.n + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(x) for x in self._nbrs])
        idx = np.array([u for x in self._nbrs for u in x], dtype=np.int64)
        return ptr, idx

    def is_forest(self) -> bool:
        """Acyclic as a constraint graph: loops and repeated edges ignored."""
        seen = np.zeros(self.n, dtype=bool)
        simple_edges = sum(len(x) for x in self._nbrs) // 2
        comps = 0
        for s in range(self.n):
            if seen[s]:
                continue
            comps += 1
            seen[s] = True
            stack = [s]
            while stack:
                v = stack.pop()
                for u in self._nbrs[v]:
                    if not seen[u]:
                        seen[u] = True
                        stack.append(u)
        return simple_edges == self.n - comps

    def components(self) -> list:
        seen = np.zeros(self.n, dtype=bool)
        out = []
        for s in range(self.n):
            if seen[s]:
                continue
            comp, stack = [], [s]
            seen[s] = True
            while stack:
                v = stack.pop()
                comp.append(v)
                for u in self._nbrs[v]:
                    if not seen[u]:
                        seen[u] = True
                        stack.append(u)
            out.append(sorted(comp))
        return out

    def subgraph(self, vertices) -> tuple["Graph", np.ndarray]:
        """Induced subgraph, relabelled in the given order; also returns the
        old-id array so that sub vertex i is old vertex ids[i]."""
        ids = np.asarray(list(vertices), dtype=np.int64)
        pos = -np.ones(self.n, dtype=np.int64)
        pos[ids] = np.arange(ids.size)
        keep = (pos[self.edges[:, 0]] >= 0) & (pos[self.edges[:, 1]] >= 0)
        return Graph(ids.size, pos[self.edges[keep]]), ids

    def to_text(self) -> str:
        lines = [f"{self.n} 0"] + [f"{u} {v}" for u, v in self.edges]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class HalfEdgeGraph:
    """Configuration-model multigraph stored as an involution on n*d points.

    Half-edge i belongs to vertex i // d.
    """
    n: int
    d: int
    pairing: np.ndarray = field(compare=False)

    def __post_init__(self):
        p = np.asarray(self.pairing, dtype=np.int64)
        object.__setattr__(self, "pairing", p)
        N = self.n * self.d
        if p.shape != (N,):
            raise ValueError(f"pairing must have length {N}")
        idx = np.arange(N)
        if N and (p.min() < 0 or p.max() >= N or np.any(p[p] != idx) or np.any(p == idx)):
            raise ValueError("pairing is not a fixed-point-free involution")

    def edges(self) -> np.ndarray:
        i = np.flatnonzero(np.arange(self.pairing.size) < self.pairing)
        return np.column_stack([i // self.d, self.pairing[i] // self.d])

    def half_edge_pairs(self) -> np.ndarray:
        i = np.flatnonzero(np.arange(self.pairing.size) < self.pairing)
        return np.column_stack([i, self.pairing[i]])

    @property
    def graph(self) -> Graph:
        return Graph(self.n, self.edges())

    def to_text(self) -> str:
        lines = [f"{self.n} {self.d}"] + [f"{i} {j}" for i, j in self.half_edge_pairs()]
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    @classmethod
    def from_text(cls, text: str) -> "HalfEdgeGraph":
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        n, d = int(rows[0][0]), int(rows[0][1])
        p = -np.ones(n * d, dtype=np.int64)
        for i, j in ((int(a), int(b)) for a, b in rows[1:]):
            if not (0 <= i < n * d and 0 <= j < n * d) or p[i] >= 0 or p[j] >= 0 or i == j:
                raise ValueError(f"bad half-edge pair {i} {j}")
            p[i], p[j] = j, i
        if np.any(p < 0):
            raise ValueError("some half-edges are unmatched")
        return cls(n, d, p)


def save_graph(graph: HalfEdgeGraph, path) -> None:
    Path(path).write_text(graph.to_text())


def load_graph(path) -> HalfEdgeGraph:
    return HalfEdgeGraph.from_text(Path(path).read_text())


def from_edge_list(n: int, d: int, edges) -> HalfEdgeGraph:
    """Lay out a d-regular edge list (loops count twice) as a pairing."""
    nxt = np.arange(n) * d
    N = n * d
    p = -np.ones(N, dtype=np.int64)
    for u, v in edges:
        i, nxt[u] = nxt[u], nxt[u] + 1
        j, nxt[v] = nxt[v], nxt[v] + 1
        p[i], p[j] = j, i
    if np.any(nxt != np.arange(1, n + 1) * d):
        raise ValueError("edge list is not d-regular")
    return HalfEdgeGraph(n, d, p)


# ------------------------------------------------------------ sampling

def _check_even(n: int, d: int):
    if (n * d) % 2:
        raise ValueError(f"n*d = {n * d} must be even")


def sample_pairings(n: int, d: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent uniform matchings as rows of involutions.

    Pairing consecutive entries of a uniform permutation gives each
    matching with the same probability, which is what random sequential
    pairing produces too (see ``sample_pairing_sequential``).
    """
    _check_even(n, d)
    N = n * d
    perm = rng.permuted(np.tile(np.arange(N), (size, 1)), axis=1)
    p = np.empty((size, N), dtype=np.int64)
    rows = np.arange(size)[:, None]
    p[rows, perm[:, 0::2]] = perm[:, 1::2]
    p[rows, perm[:, 1::2]] = perm[:, 0::2]
    return p


def sample_configuration_model(n: int, d: int, rng: np.random.Generator) -> HalfEdgeGraph:
    """Uniform perfect matching of the n*d half-edges."""
    return HalfEdgeGraph(n, d, sample_pairings(n, d, 1, rng)[0])


def sample_pairing_sequential(n: int, d: int, rng: np.random.Generator) -> HalfEdgeGraph:
    """Reveal the matching one half-edge at a time: the lowest unmatched
    point is joined to a uniform unmatched partner."""
    _check_even(n, d)
    N = n * d
    free = list(range(N))
    p = np.empty(N, dtype=np.int64)
    while free:
        i = free.pop(0)
        k = int(rng.integers(len(free)))
        j = free.pop(k)
        p[i], p[j] = j, i
    return HalfEdgeGraph(n, d, p)


def is_simple(graph) -> bool:
    g = graph.graph if isinstance(graph, HalfEdgeGraph) else graph
    e = g.edges
    if np.any(e[:, 0] == e[:, 1]):
        return False
    key = np.sort(e, axis=1)
    return np.unique(key, axis=0).shape[0] == key.shape[0]


def simple_fraction(n: int, d: int, samples: int, rng: np.random.Generator,
                    batch: int = 5000) -> float:
    """Fraction of configuration-model samples with no loop or double edge."""
    _check_even(n, d)
    N = n * d
    hits = 0
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        perm = rng.permuted(np.tile(np.arange(N), (b, 1)), axis=1)
        u = perm[:, 0::2] // d
        v = perm[:, 1::2] // d
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        loops = np.any(lo == hi, axis=1)
        key = np.sort(lo * n + hi, axis=1)
        multi = np.any(key[:, 1:] == key[:, :-1], axis=1)
        hits += int(np.sum(~loops & ~multi))
        done += b
    return hits / samples


# ----------------------------------------------------------- enumeration

def enumerate_matchings(num_points: int):
    """Yield every perfect matching of range(num_points) as an involution."""
    if num_points % 2:
        raise ValueError("odd number of points")
    p = -np.ones(num_points, dtype=np.int64)

    def rec(free):
        if not free:
            yield p.copy()
            return
        i = free[0]
        for k in range(1, len(free)):
            j = free[k]
            p[i], p[j] = j, i
            yield from rec(free[1:k] + free[k + 1:])
        p[i] = -1

    yield from rec(list(range(num_points)))


def enumerate_pairings(n: int, d: int, max_points: int = 16):
    N = n * d
    _check_even(n, d)
    if N > max_points:
        raise ResourceError(f"n*d = {N} exceeds {max_points}; ({N - 1})!! matchings")
    for p in enumerate_matchings(N):
        yield HalfEdgeGraph(n, d, p)


# ------------------------------------------------------- neighbourhoods

@dataclass
class Ball:
    center: int
    r: int
    vertices: list        # BFS order, neighbours visited in increasing id
    dist: dict
    subgraph: Graph
    is_tree: bool

    def sphere(self, k: int | None = None) -> list:
        k = self.r if k is None else k
        return [v for v in self.vertices if self.dist[v] == k]


def _as_graph(graph) -> Graph:
    return graph.graph if isinstance(graph, HalfEdgeGraph) else graph


def ball(graph, v: int, r: int) -> Ball:
    g = _as_graph(graph)
    if not 0 <= v < g.n:
        raise ValueError(f"vertex {v} not in graph")
    dist = {v: 0}
    order = [v]
    q = deque([v])
    while q:
        x = q.popleft()
        if dist[x] == r:
            continue
        for y in g.neighbors(x):
            if y not in dist:
                dist[y] = dist[x] + 1
                order.append(y)
                q.append(y)
    sub, _ = g.subgraph(order)
    return Ball(v, r, order, dist, sub, len(sub.edges) == len(order) - 1)


@dataclass
class PuncturedGraph:
    r: int
    centers_S: list
    centers_S_prime: list
    deleted: list
    surviving: list
    boundary_B: list
    groups_W: list            # W_1..W_k, then the residual W_{k+1}
    surviving_degree: dict    # boundary vertex -> degree in the punctured graph
    census: PuncturedCensus
    anomalies: list
    subgraph: Graph           # punctured graph, vertex i is surviving[i]
    _deg1: set = field(default_factory=set, repr=False)
    _deg2: set = field(default_factory=set, repr=False)

    @property
    def k(self) -> int:
        return len(self.centers_S_prime)

    def census_for(self, occupied) -> PuncturedCensus:
        """Census with the given boundary vertices occupied."""
        occ = set(int(v) for v in occupied)
        L1 = sum(1 for v in occ if v in self._deg1)
        L2 = sum(1 for v in occ if v in self._deg2)
        return self.census.with_occupied(L1, L2)


def puncture(graph, centers, r: int, d: int | None = None) -> PuncturedGraph:
    """Delete the (r-1)-balls around ``centers`` and describe what is left."""
    if r < 1:
        raise ValueError("puncture needs r >= 1")
    g = _as_graph(graph)
    if d is None:
        d = graph.d if isinstance(graph, HalfEdgeGraph) else int(g.degree.max(initial=0))
    centers = [int(c) for c in centers]
    if any(not 0 <= c < g.n for c in centers):
        raise ValueError("centers must be vertices of the graph")
    balls = {c: ball(g, c, r) for c in centers}
    deleted = set()
    sphere = set()
    for c, b in balls.items():
        deleted.update(v for v in b.vertices if b.dist[v] <= r - 1)
        sphere.update(b.sphere())
    surviving = [v for v in range(g.n) if v not in deleted]
    boundary = sorted(sphere - deleted)
    prime = []
    for c in centers:
        if not balls[c].is_tree:
            continue
        mine = set(balls[c].vertices)
        if all(not (mine & set(balls[o].vertices)) for o in centers if o != c):
            prime.append(c)
    groups = [balls[c].sphere() for c in prime]
    used = set(v for w in groups for v in w)
    groups.append([v for v in boundary if v not in used])
    sub, _ = g.subgraph(surviving)
    pos = {v: i for i, v in enumerate(surviving)}
    sdeg = {v: int(sub.degree[pos[v]]) for v in boundary}
    deg1 = {v for v, k in sdeg.items() if k == d - 1}
    deg2 = {v for v, k in sdeg.items() if k == d - 2}
    anomalies = sorted(v for v in boundary if v not in deg1 and v not in deg2)
    census = PuncturedCensus(m=len(surviving) - len(boundary), M1=len(deg1), M2=len(deg2))
    pg = PuncturedGraph(r=r, centers_S=centers, centers_S_prime=prime,
                        deleted=sorted(deleted), surviving=surviving,
                        boundary_B=boundary, groups_W=groups, surviving_degree=sdeg,
                        census=census, anomalies=anomalies, subgraph=sub,
                        _deg1=deg1, _deg2=deg2)
    return pg


# ---------------------------------------------------------------- corpus

CORPUS_DIR = Path(__file__).parent / "corpus"


def load_corpus() -> dict:
    """Small shipped multigraphs, keyed by file stem."""
    out = {}
    for path in sorted(CORPUS_DIR.glob("*.txt")):
        out[path.stem] = read_edge_file(path)
    return out


def read_edge_file(path) -> Graph:
    """Plain edge list: first line 'n m', then 'u v' per edge."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines()
            if ln.strip() and not ln.startswith("#")]
    n = int(rows[0][0])
    return Graph(n, [(int(a), int(b)) for a, b in rows[1:]])
