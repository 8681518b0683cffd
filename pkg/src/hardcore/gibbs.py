"""Exact and Monte Carlo access to the hardcore measure on finite graphs.

Fugacities may be a scalar or one value per vertex; the latter lets a
finite tree ball carry the exact boundary field of the infinite tree
(see ``tree_ball_graph``).
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from numba import njit

from .errors import ResourceError
from .graphs import Graph, HalfEdgeGraph, ball
from .moments import alpha_star, chi
from .params import HardcoreParams, fugacity_to_density, markov_kernel

MAX_FREE = 26


def _graph(g) -> Graph:
    return g.graph if isinstance(g, HalfEdgeGraph) else g


def _fugacities(lam, n: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 0:
        return np.full(n, float(lam))
    if lam.shape != (n,):
        raise ValueError(f"need {n} fugacities, got shape {lam.shape}")
    return lam.copy()


@dataclass
class SpinConfig:
    spins: np.ndarray

    def is_valid(self, graph) -> bool:
        g = _graph(graph)
        s = np.asarray(self.spins, dtype=bool)
        e = g.edges
        return not (np.any(s & g.loop) or np.any(s[e[:, 0]] & s[e[:, 1]]))


# ------------------------------------------------------ exact partition

@dataclass
class PartitionResult:
    Z: float
    log_Z: float
    marginals: np.ndarray


def _forest_component(g: Graph, comp: list, fug: np.ndarray):
    """log Z and occupation probabilities on one tree component."""
    root = comp[0]
    order, parent = [root], {root: -1}
    for v in order:
        for u in g.neighbors(v):
            if u not in parent:
                parent[u] = v
                order.append(u)
    p0 = {}
    # unnormalised sums (exact for integer fugacities) next to the ratio form
    z0, z1 = {}, {}
    logz = 0.0
    for v in reversed(order):
        prod, a0, a1 = 1.0, 1.0, 1.0
        for u in g.neighbors(v):
            if parent.get(u) == v:
                prod *= p0[u]
                a0 *= z0[u] + z1[u]
                a1 *= z0[u]
        lam_v = 0.0 if g.loop[v] else fug[v]
        odds = lam_v * prod
        p0[v] = 1.0 / (1.0 + odds)
        z0[v], z1[v] = a0, lam_v * a1
        # Z(sub v) = (1 + odds_v) prod_children Z(sub c), so log Z telescopes
        logz += math.log1p(odds)
    z = z0[root] + z1[root]
    if not (math.isfinite(z) and z > 0):
        z = math.exp(logz)
    marg = {root: 1.0 - p0[root]}
    for v in order[1:]:
        marg[v] = (1.0 - marg[parent[v]]) * (1.0 - p0[v])
    return z, logz, marg


def _branch_component(g: Graph, comp: list, fug: np.ndarray):
    """Z(mask) = Z(mask - v) + lam_v Z(mask - N[v]) with memoisation."""
    k = len(comp)
    pos = {v: i for i, v in enumerate(comp)}
    closed = [0] * k
    lam = [0.0] * k
    for v in comp:
        i = pos[v]
        closed[i] = (1 << i) | sum(1 << pos[u] for u in g.neighbors(v))
        lam[i] = 0.0 if g.loop[v] else float(fug[v])
    memo = {0: 1.0}

    def Z(mask):
        # iterative over the lowest set bit to keep recursion shallow
        if mask in memo:
            return memo[mask]
        i = (mask & -mask).bit_length() - 1
        val = Z(mask & ~(1 << i))
        if lam[i]:
            val += lam[i] * Z(mask & ~closed[i])
        memo[mask] = val
        return val

    full = (1 << k) - 1
    total = Z(full)
    marg = {v: (lam[pos[v]] * Z(full & ~closed[pos[v]]) / total if lam[pos[v]] else 0.0)
            for v in comp}
    return total, math.log(total), marg


def brute_force_partition(graph, lam, boundary=None) -> PartitionResult:
    """Z = sum over independent sets agreeing with ``boundary`` of prod lam_v.

    ``boundary`` is a dict {vertex: spin} (or a pair of sequences).
    """
    g = _graph(graph)
    fug = _fugacities(lam, g.n)
    fixed = {}
    if boundary is not None:
        if not isinstance(boundary, dict):
            verts, spins = boundary
            boundary = dict(zip(verts, spins))
        fixed = {int(v): int(s) for v, s in boundary.items()}
    marg = np.zeros(g.n)
    log_w, z_w = 0.0, 1.0
    blocked = set()
    for v, s in fixed.items():
        if s:
            if g.loop[v] or any(fixed.get(u) == 1 for u in g.neighbors(v)):
                return PartitionResult(0.0, -math.inf, np.full(g.n, np.nan))
            if fug[v] == 0:
                return PartitionResult(0.0, -math.inf, np.full(g.n, np.nan))
            log_w += math.log(fug[v])
            z_w *= fug[v]
            marg[v] = 1.0
            blocked.update(g.neighbors(v))
    free = [v for v in range(g.n) if v not in fixed and v not in blocked]
    sub, ids = g.subgraph(free)
    sub_fug = fug[ids]
    for comp in sub.components():
        csub, cids = sub.subgraph(comp)
        if csub.is_forest():
            z, lz, m = _forest_component(csub, list(range(csub.n)), sub_fug[np.asarray(comp)])
        elif csub.n <= MAX_FREE:
            z, lz, m = _branch_component(csub, list(range(csub.n)), sub_fug[np.asarray(comp)])
        else:
            raise ResourceError(f"component with {csub.n} free vertices is not a forest")
        log_w += lz
        z_w *= z
        for i, p in m.items():
            marg[ids[cids[i]]] = p
    return PartitionResult(z_w, log_w, marg)


def independent_sets(graph) -> list:
    """All independent sets of a small graph as 0/1 tuples."""
    g = _graph(graph)
    if g.n > MAX_FREE:
        raise ResourceError("too many vertices to list independent sets")
    out = []
    s = [0] * g.n

    def rec(i):
        if i == g.n:
            out.append(tuple(s))
            return
        rec(i + 1)
        if not g.loop[i] and all(not s[u] for u in g.neighbors(i) if u < i):
            s[i] = 1
            rec(i + 1)
            s[i] = 0

    rec(0)
    return out


# ------------------------------------------------------------- Glauber

@njit(cache=True)
def _heat_bath(state, ptr, idx, p_occ, vs, us):
    for t in range(vs.size):
        v = vs[t]
        free = True
        for k in range(ptr[v], ptr[v + 1]):
            if state[idx[k]]:
                free = False
                break
        if free and us[t] < p_occ[v]:
            state[v] = 1
        else:
            state[v] = 0


@njit(cache=True)
def _heat_bath_accumulate(state, ptr, idx, p_occ, vs, us, n, acc):
    # acc += state after every n updates (one sweep)
    for t in range(vs.size):
        v = vs[t]
        free = True
        for k in range(ptr[v], ptr[v + 1]):
            if state[idx[k]]:
                free = False
                break
        if free and us[t] < p_occ[v]:
            state[v] = 1
        else:
            state[v] = 0
        if (t + 1) % n == 0:
            for w in range(n):
                acc[w] += state[w]


class GlauberChain:
    """Single-site heat-bath dynamics; one sweep is n uniform site updates."""

    CHUNK = 1 << 22

    def __init__(self, graph, lam, rng: np.random.Generator, state=None):
        g = _graph(graph)
        self.graph = g
        self.n = g.n
        self.rng = rng
        fug = _fugacities(lam, g.n)
        self.p_occ = np.where(g.loop, 0.0, fug / (1.0 + fug))
        self.ptr, self.idx = g.csr()
        self.state = (np.zeros(g.n, dtype=np.uint8) if state is None
                      else np.array(state, dtype=np.uint8))
        self.sweeps_done = 0

    def _draws(self, k):
        return (self.rng.integers(0, self.n, size=k).astype(np.int64),
                self.rng.random(k))

    def run(self, sweeps: int):
        if self.n == 0:
            return self
        total = int(sweeps) * self.n
        while total > 0:
            k = min(total, self.CHUNK)
            vs, us = self._draws(k)
            _heat_bath(self.state, self.ptr, self.idx, self.p_occ, vs, us)
            total -= k
        self.sweeps_done += int(sweeps)
        return self

    def occupation_sums(self, sweeps: int) -> np.ndarray:
        """Sum of the state after each of ``sweeps`` sweeps."""
        acc = np.zeros(self.n, dtype=np.int64)
        per = max(1, self.CHUNK // self.n)
        left = int(sweeps)
        while left > 0:
            s = min(left, per)
            vs, us = self._draws(s * self.n)
            _heat_bath_accumulate(self.state, self.ptr, self.idx, self.p_occ,
                                  vs, us, self.n, acc)
            left -= s
        self.sweeps_done += int(sweeps)
        return acc

    def record(self, vertices, num: int, thin: int = 1) -> np.ndarray:
        """Spins of ``vertices`` after every ``thin`` sweeps, ``num`` times."""
        vertices = np.asarray(vertices, dtype=np.int64)
        out = np.empty((num, vertices.size), dtype=np.uint8)
        for t in range(num):
            self.run(thin)
            out[t] = self.state[vertices]
        return out


def glauber_sample(graph, lam, sweeps: int, burn_in: int, rng: np.random.Generator):
    """Yield one SpinConfig after each of ``sweeps`` sweeps, after burn-in."""
    if sweeps < 0 or burn_in < 0:
        raise ValueError("sweeps and burn_in must be nonnegative")
    chain = GlauberChain(graph, lam, rng)
    chain.run(burn_in)
    for _ in range(sweeps):
        chain.run(1)
        yield SpinConfig(chain.state.copy())


def heat_bath_kernel(graph, lam):
    """Transition matrix of the random-scan heat-bath chain on I(G)."""
    g = _graph(graph)
    fug = _fugacities(lam, g.n)
    states = independent_sets(g)
    index = {s: i for i, s in enumerate(states)}
    K = np.zeros((len(states), len(states)))
    for i, s in enumerate(states):
        for v in range(g.n):
            free = not g.loop[v] and all(not s[u] for u in g.neighbors(v))
            p1 = fug[v] / (1 + fug[v]) if free else 0.0
            for spin, p in ((1, p1), (0, 1 - p1)):
                if p == 0:
                    continue
                t = list(s)
                t[v] = spin
                K[i, index[tuple(t)]] += p / g.n
    weights = np.array([np.prod(np.where(np.array(s) == 1, fug, 1.0)) for s in states])
    return states, K, weights / weights.sum()


# ---------------------------------------------------------------- laws

@dataclass
class DiscreteLaw:
    support: tuple          # ordered vertex labels
    probs: dict             # config tuple -> probability

    def marginal(self, positions) -> "DiscreteLaw":
        positions = list(positions)
        out = Counter()
        for cfg, p in self.probs.items():
            out[tuple(cfg[i] for i in positions)] += p
        return DiscreteLaw(tuple(self.support[i] for i in positions), dict(out))

    def relabel(self, support) -> "DiscreteLaw":
        support = tuple(support)
        if len(support) != len(self.support):
            raise ValueError("relabel needs a support of the same size")
        return DiscreteLaw(support, self.probs)

    def prob(self, cfg) -> float:
        return self.probs.get(tuple(cfg), 0.0)


@dataclass
class EmpiricalLaw:
    support: tuple
    counts: Counter = field(default_factory=Counter)
    total: int = 0

    @classmethod
    def from_samples(cls, support, samples: np.ndarray) -> "EmpiricalLaw":
        samples = np.asarray(samples)
        law = cls(tuple(support))
        if samples.size:
            rows, cnt = np.unique(samples, axis=0, return_counts=True)
            for r, c in zip(rows, cnt):
                law.counts[tuple(int(x) for x in r)] += int(c)
            law.total = int(cnt.sum())
        return law

    def add(self, cfg, count: int = 1):
        self.counts[tuple(int(x) for x in cfg)] += count
        self.total += count

    def merge(self, other: "EmpiricalLaw") -> "EmpiricalLaw":
        if len(other.support) != len(self.support):
            raise ValueError("cannot merge laws on different supports")
        out = EmpiricalLaw(self.support, self.counts + other.counts, self.total + other.total)
        return out

    def law(self) -> DiscreteLaw:
        return DiscreteLaw(self.support, {k: v / self.total for k, v in self.counts.items()})

    def bias_bound(self, support_size: int | None = None) -> float:
        """(K - 1) / (2N) bound on the plug-in TV bias."""
        K = support_size if support_size is not None else len(self.counts)
        return (K - 1) / (2 * self.total) if self.total else math.inf


def tv_distance(law1, law2, match_support: bool = True) -> float:
    a = law1.law() if isinstance(law1, EmpiricalLaw) else law1
    b = law2.law() if isinstance(law2, EmpiricalLaw) else law2
    if len(a.support) != len(b.support) or (match_support and a.support != b.support):
        raise ValueError(f"support mismatch: {a.support} vs {b.support}")
    keys = set(a.probs) | set(b.probs)
    return 0.5 * math.fsum(abs(a.probs.get(k, 0.0) - b.probs.get(k, 0.0)) for k in keys)


# ----------------------------------------------------------- tree balls

@dataclass
class TreeBall:
    d: int
    r: int
    parent: np.ndarray      # parent[0] = -1; BFS order, siblings consecutive
    depth: np.ndarray

    @property
    def size(self) -> int:
        return self.parent.size

    @property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.depth == self.r)

    def graph(self) -> Graph:
        return Graph(self.size, [(int(p), i) for i, p in enumerate(self.parent) if p >= 0])


def regular_tree_ball(d: int, r: int) -> TreeBall:
    parent, depth = [-1], [0]
    frontier = [0]
    for level in range(1, r + 1):
        nxt = []
        for v in frontier:
            kids = d if v == 0 else d - 1
            for _ in range(kids):
                parent.append(v)
                depth.append(level)
                nxt.append(len(parent) - 1)
        frontier = nxt
    return TreeBall(d, r, np.array(parent), np.array(depth))


def _count_independent(ball_: TreeBall) -> int:
    n = ball_.size
    a0 = [1] * n
    a1 = [1] * n
    for v in range(n - 1, 0, -1):
        p = ball_.parent[v]
        a0[p] *= a0[v] + a1[v]
        a1[p] *= a0[v]
    return a0[0] + a1[0]


def tree_ball_law(params: HardcoreParams, r: int, cap: int = 2 ** 20):
    """Exact law of the spins on B_r(root) of the d-regular tree T_d.

    Returns (TreeBall, DiscreteLaw) with support = ball positions 0..size-1.
    """
    tb = regular_tree_ball(params.d, r)
    if _count_independent(tb) > cap:
        raise ResourceError(f"ball of radius {r} has more than {cap} configurations")
    kern, _ = markov_kernel(params)
    a = params.alpha
    cfg = np.array([[1], [0]], dtype=np.uint8)
    prob = np.array([a, 1 - a])
    keep = prob > 0
    cfg, prob = cfg[keep], prob[keep]
    for v in range(1, tb.size):
        par = cfg[:, tb.parent[v]]
        occ_par = par == 1
        # parent occupied: child empty; parent empty: split with p01 / p00
        base = np.column_stack([cfg, np.zeros(len(cfg), dtype=np.uint8)])
        ext = np.column_stack([cfg[~occ_par], np.ones((~occ_par).sum(), dtype=np.uint8)])
        p_base = np.where(occ_par, prob, prob * kern.p00)
        p_ext = prob[~occ_par] * kern.p01
        cfg = np.vstack([base, ext])
        prob = np.concatenate([p_base, p_ext])
        keep = prob > 0
        cfg, prob = cfg[keep], prob[keep]
    law = DiscreteLaw(tuple(range(tb.size)),
                      {tuple(int(x) for x in c): float(p) for c, p in zip(cfg, prob)})
    return tb, law


def tree_ball_graph(params: HardcoreParams, r: int):
    """Finite ball of T_d whose hardcore measure is the infinite-tree law.

    Interior vertices get fugacity lam; a vertex at distance r stands in
    for itself plus its d-1 outward subtrees, which adds the factor
    p00^(d-1) and leaves fugacity alpha / (1 - 2 alpha).
    """
    tb = regular_tree_ball(params.d, r)
    fug = np.full(tb.size, params.lam)
    a = params.alpha
    fug[tb.depth == r] = a / (1 - 2 * a)
    return tb, tb.graph(), fug


# --------------------------------------------------------- kappa / nu

@dataclass
class KappaNu:
    boundary: list                 # ordered B = W_1 + ... + W_{k+1}
    group_sizes: list
    kappa: dict                    # boundary config -> kappa
    nu: DiscreteLaw
    forbidden: list
    fit_residual: float            # max |log kappa - sum_i log kappa_i|
    group_kappa: list              # per center: dict local config -> kappa_i (direct)
    isomorphic_max_rel_diff: float

    def group_marginal(self, i: int) -> DiscreteLaw:
        start = sum(self.group_sizes[:i])
        return self.nu.marginal(range(start, start + self.group_sizes[i]))


def _loglinear_residual(configs, logk, sizes):
    cols = []
    start = 0
    for s in sizes:
        if s == 0:
            continue
        sub = configs[:, start:start + s]
        keys, inv = np.unique(sub, axis=0, return_inverse=True)
        onehot = np.zeros((configs.shape[0], keys.shape[0]))
        onehot[np.arange(configs.shape[0]), inv.ravel()] = 1.0
        cols.append(onehot)
        start += s
    if not cols:
        return float(np.max(np.abs(logk - logk.mean()))) if logk.size else 0.0
    X = np.hstack(cols)
    coef, *_ = np.linalg.lstsq(X, logk, rcond=None)
    return float(np.max(np.abs(X @ coef - logk)))


def kappa_and_nu(graph, punctured, lam: float, d: int | None = None,
                 max_boundary: int = 20) -> KappaNu:
    """kappa(sigma) = Z_{G,sigma} / Z_{G~,sigma} and the boundary law nu."""
    g = _graph(graph)
    if d is None:
        d = graph.d if isinstance(graph, HalfEdgeGraph) else int(g.degree.max())
    groups = [list(w) for w in punctured.groups_W]
    B = [v for w in groups for v in w]
    if len(B) > max_boundary:
        raise ResourceError(f"boundary has {len(B)} > {max_boundary} spins")
    sub = punctured.subgraph
    pos = {v: i for i, v in enumerate(punctured.surviving)}
    a_star = alpha_star(lam, d).alpha
    kappa, forbidden, weights = {}, [], {}
    rows, logs = [], []
    for cfg in product((0, 1), repeat=len(B)):
        zt = brute_force_partition(sub, lam, {pos[v]: s for v, s in zip(B, cfg)})
        if zt.Z == 0:
            forbidden.append(cfg)
            continue
        zg = brute_force_partition(g, lam, dict(zip(B, cfg)))
        k = math.exp(zg.log_Z - zt.log_Z)
        kappa[cfg] = k
        weights[cfg] = chi(sum(cfg), lam, d, a_star) * k
        rows.append(cfg)
        logs.append(zg.log_Z - zt.log_Z)
    tot = math.fsum(weights.values())
    nu = DiscreteLaw(tuple(B), {c: w / tot for c, w in weights.items()})
    resid = _loglinear_residual(np.array(rows), np.array(logs), [len(w) for w in groups])

    # direct per-center factors: the deleted (r-1)-ball given its sphere
    group_kappa = []
    for c, w in zip(punctured.centers_S_prime, groups):
        b = ball(g, c, punctured.r)
        bsub, ids = g.subgraph(b.vertices)
        where = {int(v): i for i, v in enumerate(ids)}
        fk = {}
        for cfg in product((0, 1), repeat=len(w)):
            z = brute_force_partition(bsub, lam, {where[v]: s for v, s in zip(w, cfg)})
            if z.Z > 0:
                fk[cfg] = math.exp(z.log_Z - sum(cfg) * math.log(lam))
        group_kappa.append(fk)
    diff = 0.0
    for fk in group_kappa[1:]:
        ref = group_kappa[0]
        if set(fk) != set(ref):
            diff = math.inf
            break
        diff = max([diff] + [abs(fk[c] - ref[c]) / abs(ref[c]) for c in ref])
    return KappaNu(boundary=B, group_sizes=[len(w) for w in groups], kappa=kappa,
                   nu=nu, forbidden=forbidden, fit_residual=resid,
                   group_kappa=group_kappa, isomorphic_max_rel_diff=diff)


# ------------------------------------------------------- point to set

def _sphere_and_ball(g: Graph, u: int, L: int):
    b = ball(g, u, L)
    sphere = b.sphere(L)
    sub, ids = g.subgraph(b.vertices)
    where = {int(v): i for i, v in enumerate(ids)}
    return b, sphere, sub, where


def _inner(sub, where, sphere, cfg, lam_sub, u):
    res = brute_force_partition(sub, lam_sub, {where[v]: s for v, s in zip(sphere, cfg)})
    return float(res.marginals[where[u]])


def point_to_set_estimate(graph, u: int, L: int, lam, samples: int = 1000,
                          rng: np.random.Generator | None = None, *,
                          alpha: float | None = None, thin: int = 1,
                          burn_in: int | None = None, method: str = "mc") -> float:
    """E | P(sigma_u = 1 | sigma on the L-sphere around u) - alpha |.

    The outer expectation is over the graph's own hardcore measure, by
    Glauber sampling (``method="mc"``) or by summing over all sphere
    configurations (``method="exact"``, small graphs only). The inner
    probability is always exact. ``alpha`` defaults to the tree density
    for the graph's maximum degree.
    """
    g = _graph(graph)
    fug = _fugacities(lam, g.n)
    if alpha is None:
        if np.ndim(lam):
            raise ValueError("pass alpha explicitly with per-vertex fugacities")
        d = int(g.degree.max())
        alpha = fugacity_to_density(float(lam), d) if lam > 0 else 0.0
    b, sphere, sub, where = _sphere_and_ball(g, u, L)
    if len(b.vertices) - len(sphere) > MAX_FREE and not sub.is_forest():
        raise ResourceError("ball interior is too large to enumerate")
    lam_sub = fug[np.asarray(b.vertices)]
    cache = {}

    def inner(cfg):
        if cfg not in cache:
            cache[cfg] = _inner(sub, where, sphere, cfg, lam_sub, u)
        return cache[cfg]

    if method == "exact":
        full = brute_force_partition(g, fug)
        total = 0.0
        for cfg in product((0, 1), repeat=len(sphere)):
            z = brute_force_partition(g, fug, dict(zip(sphere, cfg)))
            if z.Z == 0:
                continue
            total += math.exp(z.log_Z - full.log_Z) * abs(inner(cfg) - alpha)
        return total
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    if samples <= 0:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng() if rng is None else rng
    chain = GlauberChain(g, fug, rng)
    chain.run(100 if burn_in is None else burn_in)
    rec = chain.record(sphere, samples, thin)
    keys, cnt = np.unique(rec, axis=0, return_counts=True)
    vals = np.array([abs(inner(tuple(int(x) for x in k)) - alpha) for k in keys])
    return float(vals @ cnt / cnt.sum())
