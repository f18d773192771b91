"""The hidden-pair allocation rule A_{S,T}, its valid pairs and its feasibility family."""

from __future__ import annotations

import dataclasses
import enum
from typing import Any, Iterable, Mapping

import numpy as np

from . import rng
from .core import (
    Allocation,
    Params,
    Setting,
    TypeProfile,
    indices_to_mask,
    mask_to_indices,
)
from .errors import ParameterInfeasible, StructuralError


@dataclasses.dataclass(frozen=True)
class ValidPair:
    """Hidden sets S and T as bitmasks, with |S| = |T| = N/2 and |S & T| = eps_ST_N."""

    S: int
    T: int
    params: Params

    def __post_init__(self) -> None:
        p = self.params
        if (self.S | self.T) >> p.n:
            raise StructuralError("S and T must lie inside [0, n)")
        if self.S.bit_count() != p.half or self.T.bit_count() != p.half:
            raise ParameterInfeasible(f"|S| and |T| must both be N/2={p.half}")
        if (self.S & self.T).bit_count() != p.eps_ST_N:
            raise ParameterInfeasible(f"|S & T| must be eps_ST_N={p.eps_ST_N}")

    @classmethod
    def from_sets(cls, S: Iterable[int], T: Iterable[int], params: Params) -> "ValidPair":
        return cls(indices_to_mask(S, params.n), indices_to_mask(T, params.n), params)

    @property
    def n(self) -> int:
        return self.params.n

    def t_profile(self, setting: Setting = Setting.SINGLE, scale: Any = 1) -> TypeProfile:
        """The input whose support is exactly T (scaled by ``scale``, e.g. alpha)."""
        return TypeProfile.from_support(self.T, self.n, setting, scale)

    def to_json(self) -> dict:
        return {"S": mask_to_indices(self.S), "T": mask_to_indices(self.T)}


class Conditioning(str, enum.Enum):
    NONE = "none"
    FIXED_S = "fixed-S"
    FIXED_T = "fixed-T"


@dataclasses.dataclass(frozen=True)
class PairDistribution:
    """Uniform distribution over valid pairs, optionally with S or T held fixed."""

    params: Params
    seed: int = 0
    conditioning: Conditioning = Conditioning.NONE
    fixed: int | None = None

    def __post_init__(self) -> None:
        if (self.conditioning is Conditioning.NONE) != (self.fixed is None):
            raise StructuralError("a fixed set is required exactly when conditioning")
        if self.fixed is not None and self.fixed.bit_count() != self.params.half:
            raise ParameterInfeasible("the fixed set must have size N/2")


def _check_support(p: Params) -> None:
    need = p.N - p.eps_ST_N
    if need > p.n:
        raise ParameterInfeasible(f"no valid pair: |S | T| = {need} > n = {p.n}")


def _mask_of(indices: np.ndarray) -> int:
    m = 0
    for i in indices.tolist():
        m |= 1 << i
    return m


def sample_valid_pair(pd: PairDistribution, index: int) -> ValidPair:
    """Draw the ``index``-th pair: choose S, then S & T inside S, then T - S outside S.

    Under fixed-T the roles of S and T are swapped, which gives the uniform
    distribution over S compatible with that T.
    """
    p = pd.params
    _check_support(p)
    g = rng.generator(pd.seed, f"pair/{pd.conditioning.value}", index)
    n, half, k = p.n, p.half, p.eps_ST_N
    if pd.fixed is None:
        first = _mask_of(g.choice(n, size=half, replace=False))
    else:
        first = pd.fixed
    inside = np.array(mask_to_indices(first), dtype=np.int64)
    outside = np.array([i for i in range(n) if not (first >> i) & 1], dtype=np.int64)
    shared = _mask_of(g.choice(inside, size=k, replace=False))
    rest = _mask_of(g.choice(outside, size=half - k, replace=False))
    second = shared | rest
    if pd.conditioning is Conditioning.FIXED_T:
        return ValidPair(second, first, p)
    return ValidPair(first, second, p)


def ast_allows(support: int, S: int, T: int, p: Params) -> bool:
    """Whether A_{S,T} serves an input with this support (the non-empty branch)."""
    if support.bit_count() > p.N:
        return False
    return (support & T).bit_count() <= p.eps_T_N or (support & S).bit_count() >= p.eps_S_N


def alloc_ast(x: TypeProfile, inst: ValidPair) -> Allocation:
    """Serve the support of x unless |x| > N or x overlaps T heavily without enough of S."""
    if x.n != inst.n:
        raise StructuralError(f"profile has n={x.n}, instance has n={inst.n}")
    s = x.support
    return Allocation(s if ast_allows(s, inst.S, inst.T, inst.params) else 0, inst.n)


def is_feasible(R: Allocation, inst: ValidPair) -> bool:
    """Membership in the downward closure of range(A_{S,T}).

    R is feasible iff it is itself returnable, or it can be padded with unused
    elements of S up to the S-threshold without exceeding N.
    """
    p = inst.params
    size = len(R)
    if size > p.N:
        return False
    in_s = (R.mask & inst.S).bit_count()
    if (R.mask & inst.T).bit_count() <= p.eps_T_N or in_s >= p.eps_S_N:
        return True
    return size + (p.eps_S_N - in_s) <= p.N


class AstRule:
    """A_{S,T} as a callable rule (profile -> allocation), with an optional memo."""

    def __init__(self, inst: ValidPair, memo: bool = False) -> None:
        self.inst = inst
        self._memo: dict[int, Allocation] | None = {} if memo else None

    def __call__(self, x: TypeProfile) -> Allocation:
        if self._memo is None:
            return alloc_ast(x, self.inst)
        if x.n != self.inst.n:
            raise StructuralError(f"profile has n={x.n}, instance has n={self.inst.n}")
        s = x.support
        out = self._memo.get(s)
        if out is None:
            out = alloc_ast(x, self.inst)
            self._memo[s] = out
        return out


def pair_from_config(cfg: Mapping[str, Any], params: Params) -> ValidPair:
    return ValidPair.from_sets(cfg["S"], cfg["T"], params)
