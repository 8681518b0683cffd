"""Parameter algebra for the hardcore model on regular trees.

The fugacity lam and the occupation density alpha of the translation
invariant tree measure are tied together by

    lam = alpha/(1-2 alpha) * ((1-alpha)/(1-2 alpha))**(d-1)

and the spins along any edge follow a two-state Markov kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .errors import DomainError

_LO, _HI = 1e-16, 0.5 - 1e-16


def _log_lam(alpha: float, d: int) -> float:
    return (math.log(alpha) - math.log1p(-2 * alpha)
            + (d - 1) * (math.log1p(-alpha) - math.log1p(-2 * alpha)))


def density_to_fugacity(alpha: float, d: int) -> float:
    if not 0.0 <= alpha < 0.5:
        raise DomainError(f"alpha must lie in [0, 1/2), got {alpha}")
    if alpha == 0.0:
        return 0.0
    ll = _log_lam(alpha, d)
    return math.exp(ll) if ll < 709.0 else math.inf


def fugacity_to_density(lam: float, d: int) -> float:
    """Invert the density relation by bisection (it is increasing in alpha)."""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    target = math.log(lam)
    fn = lambda a: _log_lam(a, d) - target
    if fn(_LO) >= 0:
        return _LO
    if fn(_HI) <= 0:
        return _HI
    return bisect(fn, _LO, _HI, xtol=1e-16, rtol=4 * np.finfo(float).eps,
                  maxiter=200)


@dataclass(frozen=True)
class HardcoreParams:
    d: int
    lam: float
    alpha: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"d must be a positive integer, got {self.d}")
        if not 0.0 <= self.alpha < 0.5:
            raise DomainError(f"alpha must lie in [0, 1/2), got {self.alpha}")
        if self.lam < 0:
            raise DomainError(f"lambda must be nonnegative, got {self.lam}")

    @classmethod
    def from_alpha(cls, d: int, alpha: float) -> "HardcoreParams":
        return cls(d, density_to_fugacity(alpha, d), float(alpha))

    @classmethod
    def from_lambda(cls, d: int, lam: float) -> "HardcoreParams":
        if lam == 0:
            return cls(d, 0.0, 0.0)
        return cls(d, float(lam), fugacity_to_density(lam, d))

    @property
    def lam_internal(self) -> float:
        """Fugacity seen by a non-root vertex of the d-ary tree.

        Such a vertex has d children plus a parent, so conditioning its
        subtree on its own spin gives the density relation with d+1.
        """
        if self.alpha == 0.0:
            return 0.0
        return self.lam * (1 - self.alpha) / (1 - 2 * self.alpha)

    def to_dict(self) -> dict:
        return {"d": self.d, "lambda": self.lam, "alpha": self.alpha}


def convert_params(d: int, *, lam: float | None = None,
                   alpha: float | None = None) -> HardcoreParams:
    """Complete the (d, lambda, alpha) triple from exactly one of lam, alpha."""
    if (lam is None) == (alpha is None):
        raise ValueError("give exactly one of lam or alpha")
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    if alpha is not None:
        return HardcoreParams.from_alpha(d, alpha)
    if lam <= 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    return HardcoreParams.from_lambda(d, lam)


@dataclass(frozen=True)
class MarkovKernel:
    p11: float
    p10: float
    p01: float
    p00: float

    @property
    def matrix(self) -> np.ndarray:
        # rows: parent state 0, 1; columns: child state 0, 1
        return np.array([[self.p00, self.p01], [self.p10, self.p11]])

    def second_eigenvalue(self) -> float:
        return self.p00 + self.p11 - 1.0


@dataclass(frozen=True)
class DerivedConstants:
    theta: float
    pi01: float
    delta: float


def markov_kernel(params: HardcoreParams) -> tuple[MarkovKernel, DerivedConstants]:
    a = params.alpha
    p01 = a / (1 - a)
    kern = MarkovKernel(p11=0.0, p10=1.0, p01=p01, p00=(1 - 2 * a) / (1 - a))
    if a == 0.0:
        consts = DerivedConstants(theta=0.0, pi01=math.inf, delta=math.inf)
    else:
        consts = DerivedConstants(theta=-a / (1 - a), pi01=(1 - a) / a,
                                  delta=(1 - 2 * a) / a)
    return kern, consts


def kesten_stigum(alpha: float, d: int) -> float:
    """theta^2 (d-1); reconstruction holds when this exceeds 1."""
    return (alpha / (1 - alpha)) ** 2 * (d - 1)


@dataclass
class ThresholdReport:
    d: int
    lam_R_lower: float
    lam_R_upper: float
    alpha_R_lower: float
    alpha_R_upper: float
    alpha_c: float
    lam_c: float | None
    martin_bound: float
    C: float
    ks_alpha: float | None = None
    ks_statistic: float | None = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _lll(d: int) -> float:
    ll = math.log(math.log(d))
    return math.log(ll) if ll > 0 else math.nan


def threshold_table(d: int, alpha: float | None = None,
                    C: float = 3.01) -> ThresholdReport:
    """Leading-order reconstruction bounds with the o(1) terms dropped."""
    if d < 3:
        raise DomainError(f"threshold_table needs d >= 3, got {d}")
    ld = math.log(d)
    ll = math.log(ld)
    flags = ["asymptotic guide (o(1) dropped)"]
    if d <= 15:
        flags.append("small d: lnln d < 1, bounds not meaningful")
    lam_lo = math.log(2) * ld ** 2 / (2 * ll)
    lam_hi = math.e * ld ** 2
    a_lo = (ld + ll - _lll(d) - math.log(2) + math.log(math.log(2))) / d
    a_hi = (ld + ll + 1) / d
    delta_d = C * (ll + 1) / ld
    a_c = (2 - delta_d) * ld / d
    lam_c = None
    if 0 < a_c < 0.5:
        lam_c = density_to_fugacity(a_c, d)
    else:
        flags.append("alpha_c outside (0, 1/2); lambda_c undefined")
    rep = ThresholdReport(d=d, lam_R_lower=lam_lo, lam_R_upper=lam_hi,
                          alpha_R_lower=a_lo, alpha_R_upper=a_hi, alpha_c=a_c,
                          lam_c=lam_c, martin_bound=math.e - 1, C=C, flags=flags)
    if alpha is not None:
        rep.ks_alpha = alpha
        rep.ks_statistic = kesten_stigum(alpha, d)
    return rep
