"""Slow, independent reference computations used to cross-check the main code.

Nothing here shares logic with the modules it checks: sets instead of
bitmasks, brute-force enumeration instead of closed forms.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Sequence

import numpy as np


def ast_case(x: set[int], S: set[int], T: set[int], N: int, eps_S_N: int, eps_T_N: int) -> set[int]:
    """A_{S,T} by its four cases: too large, light on T, heavy on T without S, heavy on T with S."""
    if len(x) > N:
        return set()
    if len(x & T) <= eps_T_N:
        return set(x)
    if len(x & S) < eps_S_N:
        return set()
    return set(x)


def ast_truth_table(n: int, S: set[int], T: set[int], N: int, eps_S_N: int, eps_T_N: int) -> list[frozenset]:
    """Output of A_{S,T} for every input, indexed by the input's bitmask."""
    table = []
    for m in range(1 << n):
        x = {i for i in range(n) if m & (1 << i)}
        table.append(frozenset(ast_case(x, S, T, N, eps_S_N, eps_T_N)))
    return table


def downward_closure(n: int, members: Sequence[int]) -> np.ndarray:
    """Boolean table over all 2^n sets: is the set contained in some member?"""
    f = np.zeros(1 << n, dtype=bool)
    f[np.asarray(list(members), dtype=np.int64)] = True
    for i in range(n):
        view = f.reshape(-1, 2, 1 << i)
        view[:, 0, :] |= view[:, 1, :]
    return f


def brute_max_matching(W: Sequence[Sequence]) -> Fraction:
    """Maximum over all permutations of the summed weights."""
    k = len(W)
    if k == 0:
        return Fraction(0)
    den = math.lcm(*(Fraction(w).denominator for row in W for w in row))
    M = np.array([[int(Fraction(w) * den) for w in row] for row in W], dtype=object)
    best = max(sum(M[i, p[i]] for i in range(k)) for p in itertools.permutations(range(k)))
    return Fraction(int(best), den)


def valid_pairs(n: int, N: int, k: int):
    """Every valid pair (S, T) as frozensets, by direct enumeration."""
    half = N // 2
    for S in itertools.combinations(range(n), half):
        rest = [i for i in range(n) if i not in S]
        for shared in itertools.combinations(S, k):
            for extra in itertools.combinations(rest, half - k):
                yield frozenset(S), frozenset(shared + extra)


def s_marginals(n: int, N: int, k: int) -> list[Fraction]:
    counts = [0] * n
    total = 0
    for S, _ in valid_pairs(n, N, k):
        total += 1
        for i in S:
            counts[i] += 1
    return [Fraction(c, total) for c in counts]


def reveal_probability(n: int, N: int, eps_ST_N: int, eps_S_N: int, eps_T_N: int, q: Fraction, T: Sequence[int]) -> Fraction:
    """Pr over x ~ prior and S ~ Gamma_T that A_{S,T}(x) meets T in more than eps_T_N places.

    Enumerates every S compatible with T and every input x.
    """
    half = N // 2
    Tset = set(T)
    outside = [i for i in range(n) if i not in Tset]
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(np.int64)
    size = bits.sum(1)
    tmask = np.zeros(n, dtype=np.int64)
    tmask[list(Tset)] = 1
    in_t = bits @ tmask
    hits = np.zeros(n + 1, dtype=object)
    n_s = 0
    for shared in itertools.combinations(sorted(Tset), eps_ST_N):
        for extra in itertools.combinations(outside, half - eps_ST_N):
            n_s += 1
            smask = np.zeros(n, dtype=np.int64)
            smask[list(shared + extra)] = 1
            in_s = bits @ smask
            served = (size <= N) & ((in_t <= eps_T_N) | (in_s >= eps_S_N))
            reveal = served & (in_t > eps_T_N)
            hits += np.bincount(size[reveal], minlength=n + 1).astype(object)
    q = Fraction(q)
    total = sum((hits[k] * q**k * (1 - q) ** (n - k) for k in range(n + 1)), Fraction(0))
    return total / n_s
