"""Exhaustive small-instance oracles, computed without the product formulas."""
from __future__ import annotations

from fractions import Fraction
from itertools import combinations

import numpy as np

from .errors import ResourceError
from .graphs import enumerate_matchings
from .moments import PuncturedCensus


def _independent_subsets(owner: np.ndarray, pairing: np.ndarray, candidates, k: int,
                         fixed=()):
    """Count k-subsets of ``candidates`` that together with ``fixed`` are
    independent in the multigraph given by the matching."""
    i = np.flatnonzero(np.arange(pairing.size) < pairing)
    edges = [(int(owner[a]), int(owner[pairing[a]])) for a in i]
    count = 0
    for sub in combinations(candidates, k):
        occ = set(sub) | set(fixed)
        if all(not (u in occ and v in occ) for u, v in edges):
            count += 1
    return count


def pairing_moments(n: int, d: int, k: int, lam=1, max_points: int = 16):
    """Exact (E Z_k, E Z_k^2) over the configuration model with k = |S|."""
    N = n * d
    if N > max_points:
        raise ResourceError(f"{N} points is too many to enumerate")
    owner = np.arange(N) // d
    lam = Fraction(lam)
    s1 = s2 = Fraction(0)
    total = 0
    for p in enumerate_matchings(N):
        c = _independent_subsets(owner, p, range(n), k)
        s1 += c
        s2 += c * c
        total += 1
    w = lam ** k
    return s1 * w / total, s2 * w * w / total


def census_moments(census: PuncturedCensus, d: int, k: int, lam=1,
                   max_points: int = 14):
    """Exact first and second moments of Z_{G~, k, sigma} for a census.

    Boundary vertices of degree d-1 come first, then degree d-2, then the
    m interior vertices; the first L1 (resp. L2) boundary vertices of each
    kind are occupied.
    """
    degs = [d - 1] * census.M1 + [d - 2] * census.M2 + [d] * census.m
    N = sum(degs)
    if N > max_points:
        raise ResourceError(f"{N} points is too many to enumerate")
    if N % 2:
        raise ValueError("odd number of half-edges")
    owner = np.repeat(np.arange(len(degs)), degs)
    fixed = list(range(census.L1)) + list(range(census.M1, census.M1 + census.L2))
    interior = range(census.M1 + census.M2, len(degs))
    lam = Fraction(lam)
    s1 = s2 = Fraction(0)
    total = 0
    for p in enumerate_matchings(N):
        c = _independent_subsets(owner, p, interior, k, fixed)
        s1 += c
        s2 += c * c
        total += 1
    w = lam ** (k + census.L1 + census.L2)
    return s1 * w / total, s2 * w * w / total
