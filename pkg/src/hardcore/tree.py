"""Broadcast process and root reconstruction on the d-ary tree.

Every vertex of the d-ary tree has d children. The root has no parent,
so given the leaves its occupation odds are lam * prod 1/(1 + R_child).
A non-root vertex also has a parent outside its subtree, which raises
its effective fugacity to lam (1-alpha)/(1-2alpha). With that convention
the recursion below returns the exact Bayes posterior of the broadcast
process (see ``HardcoreParams.lam_internal``).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import binom

from .errors import ResourceError, ShapeError
from .params import HardcoreParams, markov_kernel

NODE_BUDGET = 10 ** 8


@dataclass
class BroadcastSample:
    depth: int
    spins: list  # level l holds d**l spins, child c of node i is d*i + c

    @property
    def leaves(self) -> np.ndarray:
        return self.spins[-1]


def _check_budget(d: int, depth: int, budget: int, batch: int = 1):
    nodes = sum(d ** k for k in range(depth + 1)) * batch
    if nodes > budget:
        raise ResourceError(f"{nodes} tree nodes exceed the budget of {budget}")


def _broadcast_levels(params: HardcoreParams, depth: int, size: int,
                      rng: np.random.Generator, root=None) -> list:
    """Sample ``size`` independent broadcasts; each level has shape (size, d**l)."""
    d, a = params.d, params.alpha
    p01 = a / (1 - a)
    if root is None:
        top = (rng.random((size, 1)) < a)
    else:
        top = np.full((size, 1), bool(root))
    levels = [top.astype(np.uint8)]
    for _ in range(depth):
        parent = np.repeat(levels[-1], d, axis=1)
        child = (parent == 0) & (rng.random(parent.shape) < p01)
        levels.append(child.astype(np.uint8))
    return levels


def broadcast_sample(params: HardcoreParams, depth: int,
                     rng: np.random.Generator,
                     node_budget: int = NODE_BUDGET) -> BroadcastSample:
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    _check_budget(params.d, depth, node_budget)
    levels = _broadcast_levels(params, depth, 1, rng)
    return BroadcastSample(depth, [lv[0] for lv in levels])


def _tree_depth(num_leaves: int, d: int) -> int:
    depth, size = 0, 1
    while size < num_leaves:
        size *= d
        depth += 1
    if size != num_leaves or (d == 1 and num_leaves != 1):
        raise ShapeError(f"{num_leaves} leaves is not a full level of the {d}-ary tree")
    return depth


def _root_p0(leaves: np.ndarray, d: int, lam: float, lam_int: float) -> np.ndarray:
    """P(root = 0 | leaves) for a batch of leaf rows, bottom-up."""
    p0 = 1.0 - leaves.astype(float)
    batch = p0.shape[0]
    while p0.shape[1] > 1:
        prod = p0.reshape(batch, -1, d).prod(axis=2)
        fug = lam if prod.shape[1] == 1 else lam_int
        p0 = 1.0 / (1.0 + fug * prod)
    return p0[:, 0]


def posterior_root(leaf_config, params: HardcoreParams):
    """Return (P(root=0|leaves), P(root=1|leaves), X) for one leaf level."""
    leaves = np.asarray(leaf_config).ravel()
    if leaves.size == 0:
        raise ShapeError("empty leaf configuration")
    depth = _tree_depth(leaves.size, params.d)
    if depth == 0:
        p0 = 1.0 - float(leaves[0])
    else:
        p0 = float(_root_p0(leaves[None, :], params.d, params.lam,
                            params.lam_internal)[0])
    p1 = 1.0 - p0
    a = params.alpha
    x = (p1 - a) / (1 - a) if a > 0 else 0.0
    return p0, p1, x


# ---------------------------------------------------------------- atoms

def _merge(vals: np.ndarray, ws: np.ndarray, tol: float):
    keep = ws.sum(axis=0) > 0
    vals, ws = vals[keep], ws[:, keep]
    order = np.argsort(vals, kind="stable")
    vals, ws = vals[order], ws[:, order]
    new = np.ones(vals.size, dtype=bool)
    new[1:] = np.diff(vals) > tol
    gid = np.cumsum(new) - 1
    ng = int(gid[-1]) + 1
    out_w = np.vstack([np.bincount(gid, weights=w, minlength=ng) for w in ws])
    tot = out_w.sum(axis=0)
    out_v = np.bincount(gid, weights=vals * ws.sum(axis=0), minlength=ng) / tot
    return out_v, out_w


def _product(a, b, tol):
    va, wa = a
    vb, wb = b
    vals = np.multiply.outer(va, vb).ravel()
    ws = (wa[:, :, None] * wb[:, None, :]).reshape(wa.shape[0], -1)
    return _merge(vals, ws, tol)


def _power(atoms, d: int, tol: float):
    result, base = None, atoms
    while d:
        if d & 1:
            result = base if result is None else _product(result, base, tol)
        d >>= 1
        if d:
            base = _product(base, base, tol)
    return result


@dataclass
class PosteriorAtoms:
    """Atomic law of eta = P(root=1 | leaves) under three root channels."""
    values: np.ndarray
    weight_stationary: np.ndarray
    weight_root1: np.ndarray
    weight_root0: np.ndarray
    depth: int
    approximate: bool = False
    merge_tol: float = 1e-12

    @property
    def atoms(self) -> list:
        return list(zip(self.values.tolist(), self.weight_stationary.tolist(),
                        self.weight_root1.tolist(), self.weight_root0.tolist()))

    def __len__(self):
        return self.values.size


def posterior_atoms(params: HardcoreParams, depth: int, max_atoms: int = 10 ** 5,
                    merge_tol: float = 1e-12) -> PosteriorAtoms:
    """Exact law of the root posterior, built level by level.

    At each level we keep, for every attainable value of P(v=0 | leaves
    below v), its probability given v=1 and given v=0. Children are
    conditionally independent given their parent, so the joint law of the
    d children is a d-fold product.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    kern, _ = markov_kernel(params)
    d, a = params.d, params.alpha
    # a leaf reveals its own spin: P0 = 1 - s
    vals = np.array([0.0, 1.0])
    ws = np.array([[1.0, 0.0],    # given spin 1
                   [0.0, 1.0]])   # given spin 0
    tol = merge_tol
    approximate = False
    for level in range(depth):
        # law of the child's value given the parent spin
        given1 = ws[1]
        given0 = kern.p01 * ws[0] + kern.p00 * ws[1]
        prod_v, prod_w = _power((vals, np.vstack([given1, given0])), d, tol)
        while prod_v.size > max_atoms:
            tol *= 10
            approximate = True
            prod_v, prod_w = _merge(prod_v, prod_w, tol)
        fug = params.lam if level == depth - 1 else params.lam_internal
        vals, ws = 1.0 / (1.0 + fug * prod_v), prod_w
        if level == depth - 1:
            eta = fug * prod_v / (1.0 + fug * prod_v)
    if depth == 0:
        eta = 1.0 - vals
    w1, w0 = ws[0], ws[1]
    order = np.argsort(eta)
    eta, w1, w0 = eta[order], w1[order], w0[order]
    if approximate:
        warnings.warn(f"atom budget exceeded; merged at tolerance {tol:g}")
    return PosteriorAtoms(values=eta, weight_stationary=a * w1 + (1 - a) * w0,
                          weight_root1=w1, weight_root0=w0, depth=depth,
                          approximate=approximate, merge_tol=tol)


# ---------------------------------------------------------- magnetization

@dataclass
class MagnetizationStats:
    xbar: float
    xbar0: float
    xbar1: float
    depth: int
    method: str
    mc_stderr: float | None = None
    stderr0: float | None = None
    stderr1: float | None = None
    mean_x: float = 0.0        # E[X]
    mean_x1: float = 0.0       # E^1[X]
    mean_x_stderr: float | None = None
    mean_x1_stderr: float | None = None
    samples: int | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _mc_stats(params, depth, samples, rng, batch):
    a = params.alpha
    n_leaf = params.d ** depth
    batch = max(1, min(batch, max(1, 2 * 10 ** 7 // n_leaf)))
    acc = {k: [] for k in ("x2", "x2_1", "x2_0", "x", "x_1")}
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        leaves = _broadcast_levels(params, depth, b, rng)[-1]
        if depth == 0:
            eta = leaves[:, 0].astype(float)
        else:
            eta = 1.0 - _root_p0(leaves, params.d, params.lam, params.lam_internal)
        x = (eta - a) / (1 - a)
        acc["x2"].append(x * x)
        acc["x2_1"].append(x * x * eta / a)
        acc["x2_0"].append(x * x * (1 - eta) / (1 - a))
        acc["x"].append(x)
        acc["x_1"].append(x * eta / a)
        done += b
    out = {}
    for k, v in acc.items():
        v = np.concatenate(v)
        out[k] = (float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.inf)
    return out


def xbar(params: HardcoreParams, depth: int, method: str = "exact",
         samples: int = 10 ** 5, rng: np.random.Generator | None = None,
         batch: int = 4096) -> MagnetizationStats:
    """Second moment of the root magnetization X under each channel."""
    if params.alpha == 0.0:
        return MagnetizationStats(0.0, 0.0, 0.0, depth, method,
                                  0.0 if method == "mc" else None)
    a = params.alpha
    if method == "exact":
        at = posterior_atoms(params, depth)
        x = (at.values - a) / (1 - a)
        x2 = x * x
        return MagnetizationStats(
            xbar=float(at.weight_stationary @ x2), xbar0=float(at.weight_root0 @ x2),
            xbar1=float(at.weight_root1 @ x2), depth=depth, method="exact",
            mean_x=float(at.weight_stationary @ x), mean_x1=float(at.weight_root1 @ x))
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    if samples <= 0:
        raise ValueError("mc mode needs samples > 0")
    _check_budget(params.d, depth, NODE_BUDGET)
    rng = np.random.default_rng() if rng is None else rng
    s = _mc_stats(params, depth, samples, rng, batch)
    return MagnetizationStats(
        xbar=s["x2"][0], xbar0=s["x2_0"][0], xbar1=s["x2_1"][0], depth=depth,
        method="mc", mc_stderr=s["x2"][1], stderr0=s["x2_0"][1],
        stderr1=s["x2_1"][1], mean_x=s["x"][0], mean_x1=s["x_1"][0],
        mean_x_stderr=s["x"][1], mean_x1_stderr=s["x_1"][1], samples=samples)


# ------------------------------------------------------------ depth three

BETA_MIN = math.log(2) - math.log(math.log(2))


def depth3_alpha(d: int, beta: float) -> float:
    ld = math.log(d)
    return (ld + math.log(ld) - math.log(math.log(ld)) - beta) / d


@dataclass
class Depth3Result:
    d: int
    alpha: float
    expected_posterior_root1: float
    xbar3: float
    passes: bool
    method: str
    error_bound: float = 0.0
    precondition_ok: bool = True

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _child_terms(params: HardcoreParams):
    """Per-child log(1 + R_u) values and their law given root = 1.

    Given the root is occupied each child u is empty. A grandchild w ends
    up with all-empty leaves with probability q0 = p01 + p00**(d+1), and
    then contributes odds lam'; otherwise its odds are 0. So R_u equals
    lam' (1+lam')**(-k) with k ~ Bin(d, q0).
    """
    d = params.d
    kern, _ = markov_kernel(params)
    lp = params.lam_internal
    q0 = kern.p01 + kern.p00 ** (d + 1)
    k = np.arange(d + 1)
    vals = np.log1p(lp * np.exp(-k * np.log1p(lp)))
    return vals, binom.pmf(k, d, q0)


def _sum_exact(vals, pmf, d, max_atoms):
    atoms = (vals, pmf[None, :])

    def add(x, y):
        v = np.add.outer(x[0], y[0]).ravel()
        w = (x[1][:, :, None] * y[1][:, None, :]).reshape(1, -1)
        v, w = _merge(v, w, 1e-12)
        if v.size > max_atoms:
            raise ResourceError("too many atoms")
        return v, w

    result, base, m = None, atoms, d
    while m:
        if m & 1:
            result = base if result is None else add(result, base)
        m >>= 1
        if m:
            base = add(base, base)
    return result[0], result[1][0]


def _sum_grid(vals, pmf, d, s_cap, n_grid):
    """Law of the sum of d iid copies on a uniform grid over [0, s_cap].

    Each value is split between its two neighbouring grid points so the
    mean is preserved; grid sums stay on the grid, so the only error is the
    variance added by that split (at most d h^2 / 4). Mass beyond s_cap is
    kept as a single overflow number.
    """
    h = s_cap / n_grid
    pos = vals / h
    lo = np.floor(pos).astype(np.int64)
    t = pos - lo
    base = np.zeros(n_grid)
    inside = lo < n_grid - 1
    np.add.at(base, lo[inside], pmf[inside] * (1 - t[inside]))
    np.add.at(base, lo[inside] + 1, pmf[inside] * t[inside])
    size = 2 * n_grid

    def conv(x, y):
        z = np.fft.irfft(np.fft.rfft(x, size) * np.fft.rfft(y, size), size)[:n_grid]
        return np.clip(z, 0.0, None)

    result, m = None, d
    while m:
        if m & 1:
            result = base if result is None else conv(result, base)
        m >>= 1
        if m:
            base = conv(base, base)
    return np.arange(n_grid) * h, result, h


def depth3_check(params: HardcoreParams, beta: float | None = None,
                 max_atoms: int = 10 ** 5, n_grid: int = 2 ** 20) -> Depth3Result:
    """E^1 of the depth-3 root posterior and the matching X bar(3)."""
    ok = True
    if beta is not None and beta <= BETA_MIN:
        warnings.warn(f"beta={beta} is below ln2 - lnln2; the bound is not expected")
        ok = False
    a, lam = params.alpha, params.lam
    vals, pmf = _child_terms(params)
    try:
        s, w = _sum_exact(vals, pmf, params.d, max_atoms)
        method, err = "exact", 0.0
    except ResourceError:
        s_cap = max(math.log(lam), 0.0) + 50.0
        s, w, h = _sum_grid(vals, pmf, params.d, s_cap, n_grid)
        method = "grid"
        # |g''| <= 0.1 for the logistic g, plus whatever leaked past the cap
        err = 0.1 * params.d * h * h / 8 + 1e-15 * n_grid
    e1 = float(w @ expit(math.log(lam) - s))
    x3 = a * (e1 - a) / (1 - a) ** 2
    return Depth3Result(d=params.d, alpha=a, expected_posterior_root1=e1,
                        xbar3=x3, passes=(e1 <= 0.5 and x3 <= a / 2),
                        method=method, error_bound=err, precondition_ok=ok)


def depth3_scan(beta: float = 1.2, d_start: int = 4, d_max: int = 10 ** 6):
    """Doubling schedule over d; returns (first passing d or None, results).

    Degrees where the alpha formula leaves (0, 1/2) are skipped.
    """
    results = []
    d = d_start
    while d <= d_max:
        a = depth3_alpha(d, beta)
        if not 0 < a < 0.5:
            d *= 2
            continue
        p = HardcoreParams.from_alpha(d, a)
        r = depth3_check(p, beta=beta)
        results.append(r)
        if r.passes:
            return d, results
        d *= 2
    return None, results


# ------------------------------------------------------------ contraction

def contraction_coefficient(params: HardcoreParams) -> float:
    a, d = params.alpha, params.d
    theta = -a / (1 - a)
    return theta ** 2 * ((1 - a) / (1 - 2 * a)) ** 2 * math.exp(a * d / 2) * d


@dataclass
class ContractionReport:
    coefficient: float
    stats: list = field(default_factory=list)
    ratios: list = field(default_factory=list)

    @property
    def violations(self) -> list:
        return [r for r in self.ratios if r["violation"]]

    def to_dict(self) -> dict:
        return {"coefficient": self.coefficient,
                "stats": [s.to_dict() for s in self.stats],
                "ratios": self.ratios}


def contraction_check(params: HardcoreParams, depth_max: int, samples: int,
                      rng: np.random.Generator, method: str = "mc") -> ContractionReport:
    c = contraction_coefficient(params)
    rep = ContractionReport(coefficient=c)
    for n in range(1, depth_max + 1):
        rep.stats.append(xbar(params, n, method=method, samples=samples, rng=rng))
    a = params.alpha
    for cur, nxt in zip(rep.stats, rep.stats[1:]):
        if cur.xbar > a / 2 or cur.xbar == 0.0:
            continue
        ratio = nxt.xbar / cur.xbar
        se = 0.0
        if cur.mc_stderr is not None:
            se = ratio * math.hypot(cur.mc_stderr / cur.xbar,
                                    nxt.mc_stderr / max(nxt.xbar, 1e-300))
        rep.ratios.append({"n": cur.depth, "ratio": ratio, "stderr": se,
                           "violation": bool(ratio > c + 3 * se)})
    return rep
