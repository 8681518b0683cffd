"""Seeded experiment drivers behind the command line."""
from __future__ import annotations

import hashlib
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .gibbs import (EmpiricalLaw, GlauberChain, brute_force_partition,
                    heat_bath_kernel, independent_sets, tree_ball_graph,
                    tree_ball_law, tv_distance)
from .graphs import (ball, enumerate_pairings, load_corpus, puncture,
                     sample_configuration_model)
from .moments import (OverlapPoint, PuncturedCensus, eps_bar, f_point, f_raw,
                      first_moment_exact, phi,
                      punctured_first_moment, punctured_second_moment_counts,
                      second_moment_total, verify_global_max)
from .oracles import census_moments, pairing_moments
from .params import HardcoreParams, convert_params, threshold_table
from .tree import posterior_root, xbar


def library_hash() -> str:
    """Version plus a digest of the package sources."""
    h = hashlib.sha256(__version__.encode())
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


def _rngs(seed: int, k: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def _pmap(fn, items, threads: int = 1):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


def integrated_autocorr(x: np.ndarray) -> float:
    """Integrated autocorrelation time with a self-consistent window."""
    x = np.asarray(x, dtype=float)
    if x.size < 4 or x.var() == 0:
        return 1.0
    y = x - x.mean()
    f = np.fft.rfft(y, 2 * y.size)
    acf = np.fft.irfft(f * np.conj(f))[: y.size]
    acf /= acf[0]
    tau = 1.0
    for w in range(1, y.size):
        tau = 1.0 + 2.0 * acf[1:w + 1].sum()
        if w >= 5 * tau:
            break
    return float(max(tau, 1.0))


# ---------------------------------------------------------------- LWC

def noise_floor(law, n_eff: float, rng: np.random.Generator, reps: int = 2000) -> float:
    """Median plug-in TV between ``law`` and an empirical law of ``n_eff``
    independent draws from it: what a perfect sampler would report."""
    p = np.array(list(law.probs.values()))
    n = max(1, int(n_eff))
    draws = rng.multinomial(n, p, size=reps) / n
    return float(np.median(0.5 * np.abs(draws - p).sum(axis=1)))


@dataclass
class LwcConfig:
    d: int = 3
    lam: float = 1.0
    n: int = 1024
    r: int = 1
    eps: float = 0.05
    samples: int = 10000
    thin: int = 1               # sweeps (n site updates) between records
    burn_in: int | None = None  # sweeps; default 100
    seed: int = 0
    center_exponent: float = 0.6
    second_chain: bool = True


@dataclass
class LwcReport:
    config: dict
    num_centers: int
    num_separated: int
    per_center_tv: list
    median_tv: float
    mean_tv: float
    max_tv: float
    fraction_above_eps: float
    aggregate_tv: float
    bias_bound: float
    chains_tv: float | None
    autocorr_time: float
    noise_floor_tv: float          # median plug-in TV of N/tau draws from the tree law itself
    warnings: list = field(default_factory=list)
    version: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def run_lwc_experiment(cfg: LwcConfig) -> LwcReport:
    if (cfg.n * cfg.d) % 2:
        raise ValueError("n*d must be even")
    params = HardcoreParams.from_lambda(cfg.d, cfg.lam)
    tb, tree_law = tree_ball_law(params, cfg.r)
    r_graph, r_centers, r_chain, r_chain2, r_noise = _rngs(cfg.seed, 5)
    g = sample_configuration_model(cfg.n, cfg.d, r_graph).graph
    k = min(cfg.n, math.ceil(cfg.n ** cfg.center_exponent))
    centers = np.sort(r_centers.choice(cfg.n, size=k, replace=False)).tolist()
    pg = puncture(g, centers, cfg.r, d=cfg.d)
    sep = pg.centers_S_prime
    notes = []
    if len(sep) < 10:
        notes.append(f"only {len(sep)} separated centers")
        warnings.warn(notes[-1])
    balls = [ball(g, s, cfg.r).vertices for s in sep]
    verts = np.array([v for b in balls for v in b], dtype=np.int64)
    size = tb.size
    burn = 100 if cfg.burn_in is None else cfg.burn_in

    def run_chain(rng):
        chain = GlauberChain(g, cfg.lam, rng)
        chain.run(burn)
        rec = np.empty((cfg.samples, verts.size), dtype=np.uint8)
        occ = np.empty(cfg.samples)
        for t in range(cfg.samples):
            chain.run(cfg.thin)
            rec[t] = chain.state[verts]
            occ[t] = chain.state.sum()
        return rec, occ

    rec, occ = run_chain(r_chain)
    support = tree_law.support
    tvs = []
    pooled = EmpiricalLaw(support)
    for i in range(len(sep)):
        emp = EmpiricalLaw.from_samples(support, rec[:, i * size:(i + 1) * size])
        tvs.append(tv_distance(emp, tree_law))
        pooled = pooled.merge(emp)
    agg = tv_distance(pooled, tree_law) if sep else 0.0
    chains_tv = None
    if cfg.second_chain and sep:
        rec2, _ = run_chain(r_chain2)
        pooled2 = EmpiricalLaw.from_samples(support, rec2.reshape(-1, size))
        chains_tv = tv_distance(pooled, pooled2)
    tvs_arr = np.array(tvs) if tvs else np.zeros(1)
    tau = integrated_autocorr(occ)
    return LwcReport(
        config=asdict(cfg), num_centers=k, num_separated=len(sep),
        per_center_tv=[float(t) for t in tvs], median_tv=float(np.median(tvs_arr)),
        mean_tv=float(tvs_arr.mean()), max_tv=float(tvs_arr.max()),
        fraction_above_eps=float(np.mean(tvs_arr > cfg.eps)), aggregate_tv=float(agg),
        bias_bound=(len(tree_law.probs) - 1) / (2 * cfg.samples), chains_tv=chains_tv,
        autocorr_time=tau, noise_floor_tv=noise_floor(tree_law, cfg.samples / tau, r_noise),
        warnings=notes, version=library_hash())


# ---------------------------------------------------- reconstruction scan

@dataclass
class ReconConfig:
    d: int = 3
    lams: tuple = (0.5, 1.0, 2.0, 4.0)
    depth: int = 8
    samples: int = 10 ** 5
    method: str = "mc"
    seed: int = 0
    threads: int = 1


def run_tree_recon_scan(cfg: ReconConfig) -> dict:
    if not cfg.lams or any(l <= 0 for l in cfg.lams):
        raise ValueError("lambda grid must be nonempty and positive")
    rngs = _rngs(cfg.seed, len(cfg.lams))

    def one(i):
        p = convert_params(cfg.d, lam=cfg.lams[i])
        s = xbar(p, cfg.depth, method=cfg.method, samples=cfg.samples, rng=rngs[i])
        return {"lambda": cfg.lams[i], "alpha": p.alpha, "xbar": s.xbar,
                "stderr": s.mc_stderr or 0.0, "xbar1": s.xbar1, "xbar0": s.xbar0,
                "ks_statistic": (p.alpha / (1 - p.alpha)) ** 2 * (cfg.d - 1)}

    rows = _pmap(one, range(len(cfg.lams)), cfg.threads)
    rows.sort(key=lambda r: r["lambda"])
    mono = []
    for a, b in zip(rows, rows[1:]):
        slack = 3 * math.hypot(a["stderr"], b["stderr"])
        mono.append(b["xbar"] >= a["xbar"] - slack)
    out = {"config": asdict(cfg), "rows": rows, "monotone_within_3sigma": all(mono),
           "version": library_hash()}
    if cfg.d >= 3:
        out["thresholds"] = threshold_table(cfg.d).to_dict()
    return out


# ---------------------------------------------------------- moment audit

@dataclass
class MomentAuditConfig:
    d: int = 100
    lam: float = 1.0
    grid_resolution: float = 1e-3
    n_identity: int = 100
    n_stationarity: int = 200
    seed: int = 0


def _deps(a, g, e, d, h):
    f = lambda x: float(f_raw(a, g, x, 1.0, d))
    # five-point stencil, O(h^4)
    return (-f(e + 2 * h) + 8 * f(e + h) - 8 * f(e - h) + f(e - 2 * h)) / (12 * h)


def identity_check(n: int, rng: np.random.Generator) -> float:
    """max |2 Phi(a) - f(a, a^2, a(1-2a))| over random (a, lam, d)."""
    worst = 0.0
    for _ in range(n):
        a = rng.uniform(1e-4, 0.4999)
        lam = math.exp(rng.uniform(math.log(1e-2), math.log(1e2)))
        d = int(rng.integers(3, 1001))
        worst = max(worst, abs(2 * phi(a, lam, d) - f_point(OverlapPoint.hat(a), lam, d)))
    return worst


def stationarity_check(n: int, rng: np.random.Generator):
    """max |df/deps| at eps_bar and whether d2f/deps2 < 0 there."""
    worst, concave = 0.0, True
    got = 0
    while got < n:
        a = rng.uniform(0.02, 0.45)
        g = rng.uniform(0.0, a)
        d = int(rng.integers(3, 51))
        e = eps_bar(a, g)
        margin = min(e, a - g - e, 1 - 2 * a - 2 * e)
        if margin < 1e-2:
            continue
        h = 1e-3 * margin
        worst = max(worst, abs(_deps(a, g, e, d, h)))
        f = lambda x: float(f_raw(a, g, x, 1.0, d))
        concave &= (f(e + h) - 2 * f(e) + f(e - h)) < 0
        got += 1
    return worst, bool(concave)


def run_moment_audit(cfg: MomentAuditConfig) -> dict:
    r1, r2, r3 = _rngs(cfg.seed, 3)
    rep = verify_global_max(cfg.lam, cfg.d, cfg.grid_resolution, rng=r3)
    ident = identity_check(cfg.n_identity, r1)
    stat, concave = stationarity_check(cfg.n_stationarity, r2)
    return {"config": asdict(cfg), "max": rep.to_dict(),
            "identity_max_error": ident, "eps_bar_max_derivative": stat,
            "eps_bar_concave": concave, "version": library_hash()}


# ---------------------------------------------------------- oracle suite

@dataclass
class OracleConfig:
    seed: int = 0
    glauber_sweeps: int = 200000
    glauber_tol: float = 0.01


def _check(name, ok, **detail):
    return {"name": name, "passed": bool(ok), **{k: (str(v) if isinstance(v, Fraction) else v)
                                                  for k, v in detail.items()}}


def broadcast_joint(params: HardcoreParams, depth: int):
    """Joint law of (root, leaves) on the d-ary tree by listing every
    configuration of the whole tree."""
    d = params.d
    nodes = sum(d ** k for k in range(depth + 1))
    parent = [-1] + [(i - 1) // d for i in range(1, nodes)]
    a = params.alpha
    p01 = a / (1 - a)
    cfgs = {(1,): a, (0,): 1 - a}
    for v in range(1, nodes):
        nxt = {}
        for c, p in cfgs.items():
            if c[parent[v]] == 1:
                nxt[c + (0,)] = nxt.get(c + (0,), 0.0) + p
            else:
                nxt[c + (0,)] = nxt.get(c + (0,), 0.0) + p * (1 - p01)
                nxt[c + (1,)] = nxt.get(c + (1,), 0.0) + p * p01
        cfgs = nxt
    first_leaf = nodes - d ** depth
    joint = {}
    for c, p in cfgs.items():
        key = (c[0], c[first_leaf:])
        joint[key] = joint.get(key, 0.0) + p
    return joint


def enumerated_xbar(params: HardcoreParams, depth: int):
    """(xbar, xbar1, xbar0, max posterior error) from ``broadcast_joint``."""
    joint = broadcast_joint(params, depth)
    a = params.alpha
    leaves = {k[1] for k in joint}
    xb = xb1 = xb0 = 0.0
    err = 0.0
    for lv in leaves:
        p1 = joint.get((1, lv), 0.0)
        p0 = joint.get((0, lv), 0.0)
        eta = p1 / (p1 + p0)
        x = (eta - a) / (1 - a)
        xb += (p1 + p0) * x * x
        xb1 += p1 / a * x * x
        xb0 += p0 / (1 - a) * x * x
        err = max(err, abs(posterior_root(np.array(lv), params)[1] - eta))
    return xb, xb1, xb0, err


def run_oracle_suite(cfg: OracleConfig = OracleConfig()) -> dict:
    checks = []
    # pairing enumeration vs product formulas
    n_match = sum(1 for _ in enumerate_pairings(4, 3))
    checks.append(_check("pairing count nd=12", n_match == 10395, count=n_match))
    for n, d in ((4, 3), (2, 3), (4, 2), (6, 2)):
        for k in range(0, (n + 1) // 2):
            e1, e2 = pairing_moments(n, d, k, 1)
            f1 = first_moment_exact(n, Fraction(k, n), 1, d, rational=True)
            f2 = second_moment_total(n, Fraction(k, n), 1, d, rational=True)
            checks.append(_check(f"moments n={n} d={d} k={k}", e1 == f1 and e2 == f2,
                                 oracle=(e1, e2), formula=(f1, f2)))
    for d, (m, M1, M2, L1, L2) in ((3, (2, 2, 0, 1, 0)), (3, (2, 2, 0, 0, 0)),
                                   (4, (1, 2, 1, 1, 1)), (4, (1, 2, 0, 1, 0))):
        c = PuncturedCensus(m, M1, M2, L1, L2)
        for k in range(m + 1):
            o1, o2 = census_moments(c, d, k, Fraction(3, 2))
            try:
                f1 = punctured_first_moment(c, Fraction(k, m), Fraction(3, 2), d, rational=True)
            except ValueError:
                f1 = Fraction(0)
            f2 = sum((punctured_second_moment_counts(c, d, k, G, E, Fraction(3, 2), rational=True)
                      for G in range(k + 1) for E in range((k - G) * d + 1)), Fraction(0))
            checks.append(_check(f"punctured {c} k={k}", o1 == f1 and o2 == f2,
                                 oracle=(o1, o2), formula=(f1, f2)))
    # exact partition functions
    corpus = load_corpus()
    for name, g in corpus.items():
        if g.n > 26:
            continue
        sets = independent_sets(g)
        for lam in (0.5, 1.0, 2.0):
            z = sum(lam ** sum(s) for s in sets)
            res = brute_force_partition(g, lam)
            checks.append(_check(f"Z {name} lam={lam}", abs(res.Z - z) <= 1e-12 * z,
                                 brute=res.Z, enumerated=z))
    # Glauber vs exact marginals
    rng = np.random.default_rng(cfg.seed)
    for name, g in corpus.items():
        if g.n > 12:
            continue
        ex = brute_force_partition(g, 1.0).marginals
        ch = GlauberChain(g, 1.0, rng)
        ch.run(100)
        est = ch.occupation_sums(cfg.glauber_sweeps) / cfg.glauber_sweeps
        dev = float(np.max(np.abs(est - ex)))
        checks.append(_check(f"glauber {name}", dev <= cfg.glauber_tol, max_dev=dev))
    states, K, pi = heat_bath_kernel(corpus["p3"], 1.0)
    flow = pi[:, None] * K
    checks.append(_check("detailed balance p3", np.allclose(flow, flow.T, atol=1e-15, rtol=0),
                         max_asym=float(np.abs(flow - flow.T).max())))
    # tree posterior vs full enumeration of the broadcast
    for d, depth in ((2, 1), (2, 2), (2, 3), (3, 1), (3, 2)):
        p = convert_params(d, lam=1.0)
        xb, xb1, xb0, err = enumerated_xbar(p, depth)
        s = xbar(p, depth)
        dev = max(abs(xb - s.xbar), abs(xb1 - s.xbar1), abs(xb0 - s.xbar0), err)
        checks.append(_check(f"xbar d={d} depth={depth}", dev <= 1e-12, max_dev=dev))
    # infinite-tree ball law vs brute force on the finite ball with boundary field
    for d, r in ((3, 1), (3, 2), (4, 1)):
        p = convert_params(d, lam=1.0)
        _, law = tree_ball_law(p, r)
        tb, g, fug = tree_ball_graph(p, r)
        res = brute_force_partition(g, fug)
        dev = max(abs(np.prod(np.where(np.array(s) == 1, fug, 1.0)) / res.Z - law.prob(s))
                  for s in independent_sets(g))
        checks.append(_check(f"tree ball law d={d} r={r}", dev <= 1e-12, max_dev=dev))
    failed = [c["name"] for c in checks if not c["passed"]]
    return {"config": asdict(cfg), "checks": checks, "failed": failed,
            "passed": not failed, "version": library_hash()}
