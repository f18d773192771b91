"""Incentive verifiers: MIDR, the max-weight-matching characterization, and helpers.

All comparisons are exact. Rules are callables ``profile -> Allocation``; a
randomized rule is passed as ``seed -> rule`` together with the seeds whose
realizations make up its outcome distribution.
"""

from __future__ import annotations

import dataclasses
import itertools
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from . import rng
from .core import (
    Allocation,
    PriorDistribution,
    Rational,
    Setting,
    TypeProfile,
    fraction_str,
    mask_to_bits,
    sample_profile,
    welfare,
)
from .adversarial import ValidPair
from .errors import StructuralError

Rule = Callable[[TypeProfile], Allocation]
SeededRule = Callable[[int], Rule]

_FLOAT_EXACT = 2**53


@dataclasses.dataclass(frozen=True)
class ViolationReport:
    kind: str  # "midr" or "matching"
    witness: tuple[TypeProfile, ...]
    slack: Fraction
    matching: tuple[int, ...] | None = None
    count: int = 1

    def __post_init__(self) -> None:
        if self.slack <= 0:
            raise ValueError("a violation must have positive slack")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "witness": [x.to_json() for x in self.witness],
            "matching": list(self.matching) if self.matching is not None else None,
            "slack": fraction_str(self.slack),
            "count": self.count,
        }


def realizations(rule: Rule | SeededRule, seeds: Sequence[int] | None) -> list[Rule]:
    if seeds is None:
        return [rule]  # type: ignore[list-item]
    if not seeds:
        raise StructuralError("seeds must be non-empty")
    return [rule(s) for s in seeds]  # type: ignore[misc]


# --------------------------------------------------------------------------- MIDR


def _value_rows(domain: Sequence[TypeProfile]) -> tuple[np.ndarray, np.ndarray]:
    n = domain[0].n
    if any(x.n != n for x in domain):
        raise StructuralError("domain profiles differ in length")
    if all(type(v) is int for x in domain for v in x.values):
        return np.array([x.values for x in domain], dtype=np.int64), np.ones(len(domain), np.int64)
    rows, dens = zip(*(x.scaled() for x in domain))
    return np.array(rows, dtype=np.int64), np.array(dens, dtype=np.int64)


@dataclasses.dataclass
class _MidrTable:
    own: np.ndarray  # v . sum_s A_s(v), scaled
    best: np.ndarray  # max_v' v . sum_s A_s(v'), scaled
    best_from: np.ndarray  # domain index of the first v' attaining best
    dens: np.ndarray
    reps: int


def _midr_table(
    rule: Rule | SeededRule,
    domain: Sequence[TypeProfile],
    seeds: Sequence[int] | None,
    chunk: int = 2048,
) -> _MidrTable:
    if not domain:
        raise StructuralError("empty domain")
    rules = realizations(rule, seeds)
    V, dens = _value_rows(domain)
    n = V.shape[1]
    Y = np.zeros((len(domain), n), dtype=np.int64)
    for r in rules:
        cache: dict[int, np.ndarray] = {}
        for i, x in enumerate(domain):
            y = r(x)
            if y.n != n:
                raise StructuralError("rule output has the wrong length")
            b = cache.get(y.mask)
            if b is None:
                b = mask_to_bits(y.mask, n)
                cache[y.mask] = b
            Y[i] += b
    U, inverse = np.unique(Y, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    own = (V * Y).sum(axis=1)
    use_float = int(np.abs(V).max(initial=0)) * n * len(rules) < _FLOAT_EXACT
    best = np.empty(len(domain), dtype=np.int64)
    arg = np.empty(len(domain), dtype=np.int64)
    Ut = U.T.astype(np.float64) if use_float else U.T
    for lo in range(0, len(domain), chunk):
        block = V[lo : lo + chunk]
        W = block.astype(np.float64) @ Ut if use_float else block @ Ut
        k = W.argmax(axis=1)
        arg[lo : lo + chunk] = k
        best[lo : lo + chunk] = np.rint(W[np.arange(len(k)), k]).astype(np.int64)
    # first domain index realizing each distinct outcome vector
    first_index = np.full(len(U), len(domain), dtype=np.int64)
    np.minimum.at(first_index, inverse, np.arange(len(domain)))
    return _MidrTable(own, best, first_index[arg], dens, len(rules))


def midr_violations(
    rule: Rule | SeededRule, domain: Sequence[TypeProfile], seeds: Sequence[int] | None = None
) -> list[tuple[TypeProfile, TypeProfile, Fraction]]:
    """Every v whose own outcome is beaten by another input's, with its best v' and slack."""
    domain = list(domain)
    t = _midr_table(rule, domain, seeds)
    bad = np.flatnonzero(t.best > t.own)
    return [
        (
            domain[i],
            domain[t.best_from[i]],
            Fraction(int(t.best[i] - t.own[i]), int(t.dens[i]) * t.reps),
        )
        for i in bad.tolist()
    ]


def check_midr(
    rule: Rule | SeededRule,
    domain: Sequence[TypeProfile],
    seeds: Sequence[int] | None = None,
    focus: Sequence[TypeProfile] | None = None,
) -> ViolationReport | None:
    """None if E[Wel(A(v), v)] >= E[Wel(A(v'), v)] for all v, v' in the domain.

    Otherwise the report carries the pair with the largest gap (first in
    domain order on ties) and the number of violating inputs. If ``focus``
    is given and some v in it violates, the witness is taken among those.
    """
    found = midr_violations(rule, domain, seeds)
    if not found:
        return None
    pool = list(range(len(found)))
    if focus is not None:
        wanted = set(focus)
        pool = [i for i in pool if found[i][0] in wanted] or pool
    worst = max(pool, key=lambda i: (found[i][2], -i))
    v, w, slack = found[worst]
    return ViolationReport("midr", (v, w), slack, count=len(found))


def midr_seed_sweep(
    rule: SeededRule, domain: Sequence[TypeProfile], seeds: Sequence[int]
) -> dict:
    """Per-seed verdicts and the verdict for the seed-averaged outcome distribution."""
    domain = list(domain)
    per_seed = [check_midr(rule(s), domain) for s in seeds]
    return {
        "seeds": len(seeds),
        "pass_fraction": sum(r is None for r in per_seed) / len(seeds),
        "per_seed": per_seed,
        "averaged": check_midr(rule, domain, seeds),
    }


# --------------------------------------------------------------------------- matching


@dataclasses.dataclass(frozen=True)
class MatchingGraph:
    """Bipartite graph on two copies of a type subset; weights[i][j] = E[v_i . A(v_j)]."""

    types: tuple[TypeProfile, ...]
    weights: tuple[tuple[Fraction, ...], ...]

    def identity_weight(self) -> Fraction:
        return sum((self.weights[i][i] for i in range(len(self.types))), Fraction(0))


def _outcome_value(v: TypeProfile, outs: Sequence[Allocation]) -> Fraction:
    return Fraction(sum(welfare(v, y) for y in outs), len(outs))


def build_matching_graph(
    rule: Rule | SeededRule, subset: Sequence[TypeProfile], seeds: Sequence[int] | None = None
) -> MatchingGraph:
    rules = realizations(rule, seeds)
    types = tuple(subset)
    outs = [[r(w) for r in rules] for w in types]
    W = tuple(tuple(_outcome_value(v, outs[j]) for j in range(len(types))) for v in types)
    return MatchingGraph(types, W)


def max_weight_matching(
    g: MatchingGraph | Sequence[Sequence[Rational]],
) -> tuple[tuple[int, ...], Rational]:
    """Maximum-weight perfect matching by the Hungarian method with potentials.

    Works on exact numbers. Returns ``perm`` with row i matched to column
    ``perm[i]``, and the total weight.
    """
    W = g.weights if isinstance(g, MatchingGraph) else g
    n = len(W)
    if any(len(row) != n for row in W):
        raise StructuralError("weight matrix must be square")
    if n == 0:
        return (), 0
    # minimize cost = -weight; arrays are 1-based with a virtual column 0
    big = sum(abs(w) for row in W for w in row) + 1
    u = [0] * (n + 1)
    v = [0] * (n + 1)
    match_col = [0] * (n + 1)  # match_col[j] = row matched to column j
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        match_col[0] = i
        j0 = 0
        minv = [big] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = match_col[j0]
            delta = big
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = -W[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match_col[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match_col[j0] = match_col[j1]
            j0 = j1
    perm = [0] * n
    for j in range(1, n + 1):
        perm[match_col[j] - 1] = j - 1
    total = sum(W[i][perm[i]] for i in range(n))
    return tuple(perm), total


def check_bic_matching(
    rule: Rule | SeededRule,
    subsets: Iterable[Sequence[TypeProfile]],
    seeds: Sequence[int] | None = None,
) -> ViolationReport | None:
    """None if on every subset the identity is a maximum-weight matching (ties pass).

    Otherwise the report holds the subset with the largest gap, the better
    matching found, the gap, and how many subsets failed.
    """
    rules = realizations(rule, seeds)
    memo: dict[TypeProfile, list[Allocation]] = {}

    def outcomes(w: TypeProfile) -> list[Allocation]:
        got = memo.get(w)
        if got is None:
            got = [r(w) for r in rules]
            memo[w] = got
        return got

    worst: ViolationReport | None = None
    count = 0
    for subset in subsets:
        types = tuple(subset)
        outs = [outcomes(w) for w in types]
        W = tuple(tuple(_outcome_value(v, outs[j]) for j in range(len(types))) for v in types)
        g = MatchingGraph(types, W)
        perm, best = max_weight_matching(g)
        gap = best - g.identity_weight()
        if gap > 0:
            count += 1
            if worst is None or gap > worst.slack:
                worst = ViolationReport("matching", types, Fraction(gap), perm)
    if worst is None:
        return None
    return dataclasses.replace(worst, count=count)


def bic_seed_sweep(
    rule: SeededRule, subsets: Sequence[Sequence[TypeProfile]], seeds: Sequence[int]
) -> dict:
    subsets = [tuple(s) for s in subsets]
    per_seed = [check_bic_matching(rule(s), subsets) for s in seeds]
    return {
        "seeds": len(seeds),
        "pass_fraction": sum(r is None for r in per_seed) / len(seeds),
        "per_seed": per_seed,
        "averaged": check_bic_matching(rule, subsets, seeds),
    }


def weakly_monotone(rule: Rule, domain: Sequence[TypeProfile]) -> bool:
    """v.A(v) + w.A(w) >= v.A(w) + w.A(v) for every pair in the domain."""
    outs = [rule(x) for x in domain]
    for i, j in itertools.combinations(range(len(domain)), 2):
        v, w = domain[i], domain[j]
        if welfare(v, outs[i]) + welfare(w, outs[j]) < welfare(v, outs[j]) + welfare(w, outs[i]):
            return False
    return True


# --------------------------------------------------------------------------- subset families


def subsets_up_to(domain: Sequence[TypeProfile], k: int = 3) -> Iterator[tuple[TypeProfile, ...]]:
    """All subsets of size 2..k (smaller subsets are trivially identity-optimal)."""
    for size in range(2, k + 1):
        yield from itertools.combinations(domain, size)


def random_subsets(
    prior: PriorDistribution, r: int, k: int = 3, seed: int = 0
) -> Iterator[tuple[TypeProfile, ...]]:
    """``r`` subsets of 2..k profiles drawn from the prior, reproducible from ``seed``."""
    if k < 2:
        raise StructuralError("subsets need k >= 2")
    g = rng.generator(seed, "subsets")
    src = prior.with_seed(rng.derive_seed(seed, "subset-profiles"))
    nxt = 0
    for _ in range(r):
        size = int(g.integers(2, k + 1))
        yield tuple(sample_profile(src, nxt + i) for i in range(size))
        nxt += size


def targeted_subsets(
    xs: Iterable[TypeProfile], pair: ValidPair, alpha: Rational, setting: Setting = Setting.MULTI
) -> Iterator[tuple[TypeProfile, TypeProfile]]:
    """The two-type family {x, alpha * T}."""
    top = pair.t_profile(setting, alpha)
    for x in xs:
        if x != top:
            yield (x, top)


def scale_profile(x: TypeProfile, c: Rational) -> TypeProfile:
    if c <= 0:
        raise ValueError("scale must be positive")
    setting = x.setting if c == 1 else Setting.MULTI
    return TypeProfile(tuple(v * c for v in x.values), setting)


def slack_float(report: ViolationReport | None) -> float:
    return 0.0 if report is None else float(report.slack)


__all__ = [
    "MatchingGraph",
    "ViolationReport",
    "bic_seed_sweep",
    "build_matching_graph",
    "check_bic_matching",
    "check_midr",
    "max_weight_matching",
    "midr_seed_sweep",
    "midr_violations",
    "random_subsets",
    "realizations",
    "scale_profile",
    "subsets_up_to",
    "targeted_subsets",
    "weakly_monotone",
]
