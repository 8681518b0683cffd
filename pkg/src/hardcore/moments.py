"""Moment formulas for the hardcore partition function on random regular graphs.

Continuous rates (Phi, f, Psi2, the overlap maximisation) work on numpy
arrays; the finite-n products are evaluated in log space via lgamma, or
exactly with integers and Fractions when ``rational=True``.

Convention: eps counts half-edges, i.e. eps*d*n edges join S \\ T to the
vertices outside S u T.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import bisect

from .errors import DomainError

_TOL = 1e-14


def xlogx(x):
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, x * np.log(safe), 0.0)


def H(x):
    return -xlogx(x) - xlogx(1 - np.asarray(x, dtype=float))


def H1(x, y):
    """-x(ln x - ln y) + (x - y)(ln(y - x) - ln y), continuous at x=0 and x=y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return xlogx(y) - xlogx(x) - xlogx(y - x)


def _int_log(c, t):
    # int_0^t ln(c - x) dx
    return xlogx(c) - xlogx(np.asarray(c) - t) - t


def _int_log2(c, t):
    # int_0^t ln(c - 2x) dx
    return 0.5 * (xlogx(c) - xlogx(np.asarray(c) - 2 * np.asarray(t))) - t


# ------------------------------------------------------------- points

@dataclass(frozen=True)
class OverlapPoint:
    alpha: float
    gamma: float
    epsilon: float

    def violations(self, tol: float = _TOL) -> list:
        a, g, e = self.alpha, self.gamma, self.epsilon
        out = []
        for name, v in (("alpha", a), ("gamma", g), ("epsilon", e)):
            if v < -tol:
                out.append(f"{name} >= 0")
            if v > 0.5 + tol:
                out.append(f"{name} <= 1/2")
        if a - g - e < -tol:
            out.append("alpha - gamma - epsilon >= 0")
        if 1 - 2 * a - 2 * e < -tol:
            out.append("1 - 2 alpha - 2 epsilon >= 0")
        return out

    def check(self):
        bad = self.violations()
        if bad:
            raise DomainError(f"{self} outside the feasible region: violates {', '.join(bad)}")
        return self

    @property
    def array(self) -> np.ndarray:
        return np.array([self.alpha, self.gamma, self.epsilon])

    @classmethod
    def hat(cls, alpha: float) -> "OverlapPoint":
        """The independent-pair point gamma = alpha^2, eps = alpha(1-2 alpha)."""
        return cls(alpha, alpha * alpha, alpha * (1 - 2 * alpha))


def phi(alpha, lam: float, d: int):
    """Exponential growth rate of the first moment of Z_{G, alpha}."""
    a = np.asarray(alpha, dtype=float)
    if np.any(a < 0) or np.any(a > 0.5):
        raise DomainError("alpha must lie in [0, 1/2]")
    out = H(a) + a * math.log(lam) + d * (xlogx(1 - a) - 0.5 * xlogx(1 - 2 * a))
    return out if out.ndim else float(out)


def psi2(a, g, e):
    a, g, e = (np.asarray(v, dtype=float) for v in (a, g, e))
    return (H1(e, a - g)
            + _int_log(1 - 2 * a + g, g) - _int_log2(1.0, g)
            + _int_log(1 - 2 * a, e)
            + _int_log(a - g, a - g - e)
            - _int_log2(1 - 2 * g, a - g)
            + _int_log(1 - 2 * a - e, e) - _int_log2(1 - 2 * a, e))


def f_raw(a, g, e, lam: float, d: int):
    """f on arrays, no domain checks (callers keep points inside R)."""
    a, g, e = (np.asarray(v, dtype=float) for v in (a, g, e))
    return (2 * a * math.log(lam) + H(a) + H1(g, a) + H1(a - g, 1 - a)
            + d * psi2(a, g, e))


def f_point(point: OverlapPoint, lam: float, d: int) -> float:
    point.check()
    return float(f_raw(point.alpha, point.gamma, point.epsilon, lam, d))


def eps_bar(alpha, gamma):
    """Stationary point of f in eps at fixed (alpha, gamma)."""
    a = np.asarray(alpha, dtype=float)
    g = np.asarray(gamma, dtype=float)
    if np.any(g > a + _TOL) or np.any(g < -_TOL) or np.any(a >= 0.5):
        raise DomainError("need 0 <= gamma <= alpha < 1/2")
    out = 0.5 * (1 - 2 * g - np.sqrt((1 - 2 * a) ** 2 + 4 * (a - g) ** 2))
    out = np.clip(out, 0.0, np.minimum(a - g, 0.5 - a))
    return out if out.ndim else float(out)


def g_fun(alpha, gamma, lam: float, d: int):
    out = f_raw(alpha, gamma, eps_bar(alpha, gamma), lam, d)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class StarPoint:
    alpha: float
    gamma: float
    epsilon: float
    residual: float

    @property
    def point(self) -> OverlapPoint:
        return OverlapPoint(self.alpha, self.gamma, self.epsilon)


def alpha_star_residual(alpha: float, lam: float, d: int) -> float:
    return lam * (1 - alpha) / alpha * ((1 - 2 * alpha) / (1 - alpha)) ** d - 1.0


def alpha_star(lam: float, d: int) -> StarPoint:
    """Maximiser of Phi: solves lam (1-a)/a ((1-2a)/(1-a))^d = 1."""
    if lam <= 0:
        raise DomainError("lambda must be positive")
    # the log form is strictly decreasing in alpha
    fn = lambda a: (math.log(lam) + math.log1p(-a) - math.log(a)
                    + d * (math.log1p(-2 * a) - math.log1p(-a)))
    a = bisect(fn, 1e-300, 0.5 - 1e-16, xtol=1e-300, rtol=4 * np.finfo(float).eps,
               maxiter=2000)
    return StarPoint(a, a * a, a * (1 - 2 * a), abs(alpha_star_residual(a, lam, d)))


def chi(k: int, lam: float, d: int, a_star: float | None = None) -> float:
    """Boundary weight (lam ((1-2a*)/(1-a*))^(d-1))^k."""
    a = alpha_star(lam, d).alpha if a_star is None else a_star
    return (lam * ((1 - 2 * a) / (1 - a)) ** (d - 1)) ** k


# ------------------------------------------------------ exact products
# Every product below is either a log (float) or an exact integer/Fraction.

def _falling(top: int, k: int, rational: bool):
    """prod_{i<k} (top - i)."""
    if k < 0:
        raise ValueError("negative count")
    if k == 0:
        return 1 if rational else 0.0
    if top < k:
        return 0 if rational else -math.inf
    if rational:
        return math.prod(range(top - k + 1, top + 1))
    return math.lgamma(top + 1) - math.lgamma(top - k + 1)


def _step2(top: int, k: int, rational: bool):
    """prod_{i<k} (top - 2i); only used where every factor is positive."""
    if k == 0:
        return 1 if rational else 0.0
    if top - 2 * (k - 1) <= 0:
        raise DomainError("pairing denominator is not positive")
    if rational:
        return math.prod(range(top, top - 2 * k, -2))
    return k * math.log(2) + math.lgamma(top / 2 + 1) - math.lgamma(top / 2 - k + 1)


def _comb(n: int, k: int, rational: bool):
    if k < 0 or k > n:
        return 0 if rational else -math.inf
    if rational:
        return math.comb(n, k)
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _mul(rational: bool, *xs):
    if rational:
        out = Fraction(1)
        for x in xs:
            out *= x
        return out
    if any(x == -math.inf for x in xs):
        return -math.inf
    return math.fsum(xs)


def _div(rational: bool, x, y):
    return Fraction(x) / y if rational else x - y


def _lam_power(lam, k: int, rational: bool):
    if rational:
        return Fraction(lam) ** k
    if k == 0:
        return 0.0
    return k * math.log(lam) if lam > 0 else -math.inf


def pairing_prob_single(total: int, occ: int, rational: bool = False):
    """P(no two of ``occ`` marked points are matched) in a uniform matching
    of ``total`` points."""
    return _div(rational, _falling(total - occ, occ, rational),
                _step2(total - 1, occ, rational))


def pairing_prob_pair(total: int, both: int, only: int, cross: int, rest: int,
                      rational: bool = False):
    """Probability that two marked sets S, T are both independent.

    ``both`` points lie in S and T, ``only`` points in each of S\\T and
    T\\S, ``rest`` points in neither; exactly ``cross`` points of S\\T
    (and of T\\S) are matched into the rest. The matching is revealed in
    three rounds: the shared points, then S\\T, then what is left of T\\S.
    """
    r = rational
    if both + 2 * cross > rest or cross > only:
        return 0 if r else -math.inf
    stage1 = _div(r, _falling(rest, both, r), _step2(total - 1, both, r))
    free = rest - both                      # unused points outside S u T
    stage2 = _div(r, _mul(r, _comb(only, cross, r), _falling(free, cross, r),
                          _falling(only, only - cross, r)),
                  _step2(total - 2 * both - 1, only, r))
    left = total - 2 * both - 2 * only
    stage3 = _div(r, _falling(free - cross, cross, r), _step2(left - 1, cross, r))
    return _mul(r, stage1, stage2, stage3)


def _as_count(x, scale: int, what: str) -> int:
    if isinstance(x, Fraction):
        v = x * scale
        if v.denominator != 1:
            raise ValueError(f"{what} = {v} must be an integer")
        return int(v)
    v = x * scale
    k = round(v)
    if abs(v - k) > 1e-9:
        raise ValueError(f"{what} = {v} must be an integer")
    return int(k)


def _finish(val, rational: bool, log: bool):
    if rational or log:
        return val
    return math.exp(val) if val > -math.inf else 0.0


def first_moment_exact(n: int, alpha, lam, d: int, *, rational: bool = False,
                       log: bool = False):
    """E Z_{G,alpha} on the n-vertex configuration model."""
    if (n * d) % 2:
        raise ValueError("n*d must be even")
    if not alpha < 0.5:
        raise DomainError("alpha must be < 1/2")
    k = _as_count(alpha, n, "alpha*n")
    val = _mul(rational, _comb(n, k, rational), _lam_power(lam, k, rational),
               pairing_prob_single(n * d, k * d, rational))
    return _finish(val, rational, log)


def second_moment_counts(n: int, d: int, A: int, G: int, E: int, lam, *,
                         rational: bool = False, log: bool = False):
    """Expected weight of pairs (S, T) with |S|=|T|=A, |S n T|=G, and E
    half-edges of S\\T going outside S u T."""
    r = rational
    val = _mul(r, _lam_power(lam, 2 * A, r), _comb(n, A, r), _comb(A, G, r),
               _comb(n - A, A - G, r),
               pairing_prob_pair(n * d, G * d, (A - G) * d, E, (n - 2 * A + G) * d, r))
    return _finish(val, r, log)


def second_moment_exact(n: int, point: OverlapPoint, lam, d: int, *,
                        rational: bool = False, log: bool = False):
    point.check()
    if (n * d) % 2:
        raise ValueError("n*d must be even")
    A = _as_count(point.alpha, n, "alpha*n")
    G = _as_count(point.gamma, n, "gamma*n")
    E = _as_count(point.epsilon, n * d, "epsilon*d*n")
    return second_moment_counts(n, d, A, G, E, lam, rational=rational, log=log)


def feasible_counts(n: int, d: int, A: int):
    """Integer (G, E) pairs with a nonzero second-moment term."""
    for G in range(max(0, 2 * A - n), A + 1):
        for E in range(0, (A - G) * d + 1):
            if G * d + 2 * E <= (n - 2 * A + G) * d:
                yield G, E


def second_moment_total(n: int, alpha, lam, d: int, *, rational: bool = False,
                        log: bool = False):
    """E (Z_{G,alpha})^2 as the sum of the per-(gamma, eps) terms."""
    A = _as_count(alpha, n, "alpha*n")
    terms = [second_moment_counts(n, d, A, G, E, lam, rational=rational, log=True)
             for G, E in feasible_counts(n, d, A)]
    if rational:
        return sum(terms, Fraction(0))
    terms = np.array(terms)
    top = terms.max()
    val = top + math.log(math.fsum(np.exp(terms - top))) if top > -math.inf else -math.inf
    return _finish(val, False, log)


# -------------------------------------------------------- punctured graph

@dataclass(frozen=True)
class PuncturedCensus:
    m: int      # interior vertices of the punctured graph
    M1: int     # boundary vertices of degree d-1
    M2: int     # boundary vertices of degree d-2
    L1: int = 0
    L2: int = 0

    def __post_init__(self):
        for name in ("m", "M1", "M2", "L1", "L2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.L1 > self.M1 or self.L2 > self.M2:
            raise ValueError("L_i must not exceed M_i")

    @property
    def K1(self) -> int:
        return self.M1 - self.L1

    @property
    def K2(self) -> int:
        return self.M2 - self.L2

    def total_half_edges(self, d: int) -> int:
        return (d - 1) * self.M1 + (d - 2) * self.M2 + d * self.m

    def occupied_boundary_half_edges(self, d: int) -> int:
        return (d - 1) * self.L1 + (d - 2) * self.L2

    def free_boundary_half_edges(self, d: int) -> int:
        return (d - 1) * self.K1 + (d - 2) * self.K2

    def with_occupied(self, L1: int, L2: int) -> "PuncturedCensus":
        return PuncturedCensus(self.m, self.M1, self.M2, L1, L2)


def punctured_first_moment(census: PuncturedCensus, alpha, lam, d: int, *,
                           rational: bool = False, log: bool = False):
    r = rational
    k = _as_count(alpha, census.m, "alpha*m")
    NT = census.total_half_edges(d)
    N1 = census.occupied_boundary_half_edges(d) + d * k
    if 2 * N1 > NT:
        raise DomainError(f"infeasible census: N1={N1} > N_T/2={NT / 2}")
    if NT % 2:
        raise ValueError("odd number of half-edges")
    val = _mul(r, _lam_power(lam, census.L1 + census.L2 + k, r),
               _comb(census.m, k, r), pairing_prob_single(NT, N1, r))
    return _finish(val, r, log)


def punctured_second_moment_counts(census: PuncturedCensus, d: int, A: int, G: int,
                                   E: int, lam, *, rational: bool = False,
                                   log: bool = False):
    r = rational
    m = census.m
    NT = census.total_half_edges(d)
    Lh = census.occupied_boundary_half_edges(d)
    Kh = census.free_boundary_half_edges(d)
    val = _mul(r, _lam_power(lam, 2 * A + 2 * (census.L1 + census.L2), r),
               _comb(m, A, r), _comb(A, G, r), _comb(m - A, A - G, r),
               pairing_prob_pair(NT, G * d + Lh, (A - G) * d, E,
                                 (m - 2 * A + G) * d + Kh, r))
    return _finish(val, r, log)


def punctured_second_moment(census: PuncturedCensus, point: OverlapPoint, lam,
                            d: int, *, rational: bool = False, log: bool = False):
    point.check()
    m = census.m
    A = _as_count(point.alpha, m, "alpha*m")
    G = _as_count(point.gamma, m, "gamma*m")
    E = _as_count(point.epsilon, m * d, "epsilon*d*m")
    return punctured_second_moment_counts(census, d, A, G, E, lam,
                                          rational=rational, log=log)


# ------------------------------------------------------------- Hessian

def hessian_hat(alpha: float, d: int) -> np.ndarray:
    """Closed-form Hessian of f at gamma = alpha^2, eps = alpha(1-2 alpha).

    Order of variables: (alpha, gamma, eps). Does not depend on lambda.
    """
    a = alpha
    faa = ((a * a * (6 - 21 * d) + 2 * a ** 4 * (d - 4) - d + 16 * a ** 3 * d
            + a * (8 * d - 2)) / ((1 - 2 * a) ** 2 * (1 - a) ** 2 * a * a))
    fag = (a * (2 - 4 * d) + d + a * a * d) / ((1 - a) ** 2 * a * a)
    fae = (1 - 4 * a + 2 * a * a) * d / ((1 - 2 * a) ** 2 * a * a)
    fgg = (-1 + (-1 + 4 * a - 2 * a * a) * d) / ((1 - a) ** 2 * a * a)
    fge = -d / (a * a)
    fee = -(1 - 2 * a + 2 * a * a) * d / ((1 - 2 * a) ** 2 * a * a)
    return np.array([[faa, fag, fae], [fag, fgg, fge], [fae, fge, fee]])


def _margin(p: np.ndarray) -> float:
    a, g, e = p
    return min(a, g, e, a - g - e, 0.5 - a, 1 - 2 * a - 2 * e, a - g)


def fd_hessian(fun, x, step: float = 1e-5) -> np.ndarray:
    """Central second differences with one Richardson step (h, h/2)."""
    x = np.asarray(x, dtype=float)
    k = x.size

    def raw(h):
        out = np.empty((k, k))
        f0 = fun(x)
        for i in range(k):
            ei = np.zeros(k)
            ei[i] = h
            out[i, i] = (fun(x + ei) - 2 * f0 + fun(x - ei)) / (h * h)
            for j in range(i + 1, k):
                ej = np.zeros(k)
                ej[j] = h
                v = (fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej)
                     + fun(x - ei - ej)) / (4 * h * h)
                out[i, j] = out[j, i] = v
        return out

    return (4 * raw(step / 2) - raw(step)) / 3


def hessian_f(point: OverlapPoint, lam: float, d: int, method: str = "auto",
              step: float = 1e-5) -> np.ndarray:
    point.check()
    p = point.array
    at_hat = (abs(point.gamma - point.alpha ** 2) < 1e-14
              and abs(point.epsilon - point.alpha * (1 - 2 * point.alpha)) < 1e-14)
    if method == "analytic" or (method == "auto" and at_hat):
        if not at_hat:
            raise DomainError("closed-form Hessian is only valid at the hat point")
        return hessian_hat(point.alpha, d)
    if method not in ("auto", "fd"):
        raise ValueError(f"unknown method {method!r}")
    margin = _margin(p)
    if margin <= 0:
        raise DomainError(f"{point} is on the boundary of R; finite differences refused")
    # near the max gamma ~ alpha^2 is tiny, so the step has to follow the
    # distance to the boundary of R rather than stay at a fixed size
    h = min(step, margin * 0.01)
    return fd_hessian(lambda x: float(f_raw(*x, lam, d)), p, h)


# ------------------------------------------------------ global maximum

@dataclass
class MaxReport:
    lam: float
    d: int
    grid_resolution: float
    grid_argmax: tuple
    grid_max: float
    lattice_argmax: tuple
    lattice_max: float
    lattice_within_one_cell: bool
    profile_gap: float
    star: tuple
    f_star: float
    within_one_cell: bool
    hessian: list
    hessian_fd: list
    hessian_rel_dev: float
    eigenvalues: list
    negative_definite: bool
    decay_C_fit: float
    decay_C_min: float
    decay_C_local: float
    alpha_star_residual: float
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def grid_argmax(lam: float, d: int, h: float = 1e-3):
    """Scan f over R with step h in every coordinate.

    Returns a dict with two argmaxes: ``lattice`` over the plain grid
    h*Z^3 n R, and ``profile`` over grid (alpha, gamma) with eps set to
    its maximiser eps_bar(alpha, gamma). Close to the maximum the band
    alpha - gamma - eps is of order alpha^2, far below h, so the plain
    lattice cannot land near it; the profile resolves eps exactly.
    ``profile_gap`` is the largest excess of a lattice value over the
    profile value at the same (alpha, gamma) and should be <= 0.
    """
    na = int(round(0.5 / h))
    lat = (-math.inf, None)
    pro = (-math.inf, None)
    gap = -math.inf
    for i in range(0, na + 1):
        a = i * h
        gi = np.arange(0, i + 1)
        emax = min(i, na - i)
        ei = np.arange(0, emax + 1)
        G, E = np.meshgrid(gi, ei, indexing="ij")
        vals = f_raw(a, G * h, E * h, lam, d)
        vals = np.where(i - G - E >= 0, vals, -np.inf)
        j = np.unravel_index(np.argmax(vals), vals.shape)
        if vals[j] > lat[0]:
            lat = (float(vals[j]), (a, G[j] * h, E[j] * h))
        if i == na:
            continue  # eps_bar needs alpha < 1/2
        g = gi * h
        eb = eps_bar(a, g)
        pv = f_raw(a, g, eb, lam, d)
        gap = max(gap, float(np.max(vals.max(axis=1) - pv)))
        k = int(np.argmax(pv))
        if pv[k] > pro[0]:
            pro = (float(pv[k]), (a, float(g[k]), float(eb[k])))
    return {"lattice": lat[1], "lattice_max": lat[0],
            "profile": pro[1], "profile_max": pro[0], "profile_gap": gap}


def verify_global_max(lam: float, d: int, grid_resolution: float = 1e-3,
                      rng: np.random.Generator | None = None,
                      n_decay: int = 2000) -> MaxReport:
    rng = np.random.default_rng(0) if rng is None else rng
    st = alpha_star(lam, d)
    star = st.point
    scan = grid_argmax(lam, d, grid_resolution)
    close = lambda p: all(abs(x - y) <= grid_resolution * (1 + 1e-9)
                          for x, y in zip(p, star.array))
    arg, gmax = scan["profile"], scan["profile_max"]
    within = close(arg)
    hess = hessian_f(star, lam, d, method="analytic")
    hfd = hessian_f(star, lam, d, method="fd")
    rel = float(np.max(np.abs(hess - hfd)) / np.max(np.abs(hess)))
    eig = np.linalg.eigvalsh(hess)
    f_star = f_point(star, lam, d)

    # quadratic decay f* - f >= C |p - p*|^2 on a neighbourhood inside R
    radius = 0.5 * _margin(star.array)
    dirs = rng.normal(size=(n_decay, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rads = radius * rng.random(n_decay) ** (1 / 3)
    pts = star.array + dirs * rads[:, None]
    drop = f_star - f_raw(pts[:, 0], pts[:, 1], pts[:, 2], lam, d)
    r2 = rads * rads
    notes = []
    if radius <= 0:
        notes.append("star point on the boundary; decay fit skipped")
    c_fit = float(np.dot(drop, r2) / np.dot(r2, r2))
    c_min = float(np.min(drop / r2))
    return MaxReport(lam=lam, d=d, grid_resolution=grid_resolution,
                     grid_argmax=tuple(float(x) for x in arg), grid_max=gmax,
                     lattice_argmax=tuple(float(x) for x in scan["lattice"]),
                     lattice_max=scan["lattice_max"],
                     lattice_within_one_cell=close(scan["lattice"]),
                     profile_gap=scan["profile_gap"],
                     star=tuple(float(x) for x in star.array),
                     f_star=f_star, within_one_cell=within, hessian=hess.tolist(),
                     hessian_fd=hfd.tolist(), hessian_rel_dev=rel,
                     eigenvalues=eig.tolist(), negative_definite=bool(np.all(eig < 0)),
                     decay_C_fit=c_fit, decay_C_min=c_min,
                     decay_C_local=float(-eig.max() / 2),
                     alpha_star_residual=st.residual, notes=notes)
