"""Black-box transformations: oracle access to A plus samples from the prior, out comes M_A.

Each transformation is a deterministic function of its context (oracle
session, prior, feasibility mode, seed) and the input. Randomized
transformations are realized by sweeping the context seed.
"""

from __future__ import annotations

import dataclasses
import enum
from functools import lru_cache
from typing import Callable

import numpy as np

from . import rng
from .core import (
    Allocation,
    PriorDistribution,
    TypeProfile,
    enumerate_profiles,
    sample_profile,
)
from .errors import BudgetExceeded, ConfigError, FeasibilityViolation
from .oracle import OracleSession


class FeasibilityMode(str, enum.Enum):
    RANGE_ONLY = "range-only"
    DOWNWARD_CLOSED = "downward-closed"

    @classmethod
    def parse(cls, value: "str | FeasibilityMode") -> "FeasibilityMode":
        if isinstance(value, FeasibilityMode):
            return value
        v = str(value).lower().replace("_", "-")
        if v in ("range-only", "rangeonly", "range"):
            return cls.RANGE_ONLY
        if v in ("downward-closed", "downwardclosed", "downward-closed-inference", "dc"):
            return cls.DOWNWARD_CLOSED
        raise ConfigError(f"unknown feasibility mode {value!r}")


@dataclasses.dataclass
class TransformationContext:
    session: OracleSession
    prior: PriorDistribution
    feasibility_mode: FeasibilityMode = FeasibilityMode.RANGE_ONLY
    seed: int = 0
    # side-computation memo; may be shared across contexts over the same oracle
    cache: dict = dataclasses.field(default_factory=dict)


@dataclasses.dataclass(frozen=True)
class MechanismOutput:
    allocation: Allocation
    audit: tuple[TypeProfile, ...]
    truncated: bool = False

    @property
    def queries(self) -> int:
        return len(self.audit)


class _Recorder:
    """Routes queries to the session and remembers which profiles this run asked for."""

    def __init__(self, session: OracleSession) -> None:
        self.session = session
        self.asked: list[TypeProfile] = []
        self.seen: dict[Allocation, None] = {}

    def query(self, x: TypeProfile) -> Allocation:
        y = self.session.query(x)
        self.asked.append(x)
        self.seen[y] = None
        return y


def _best(cands: np.ndarray, x: TypeProfile, downward: bool) -> tuple[np.ndarray, int]:
    """Welfare-argmax over a 0/1 candidate matrix; ties go to the lexicographically
    smallest bitstring. With ``downward`` each candidate is first trimmed to x's
    support, the smallest best subset of it. Returns the chosen row and the index
    of the candidate it came from."""
    vals, _ = x.scaled()
    rows = cands & (vals > 0).astype(np.uint8) if downward else cands
    w = rows.astype(np.int64) @ vals
    top = np.flatnonzero(w == w.max())
    i = int(top[0]) if len(top) == 1 else min(top.tolist(), key=lambda k: rows[k].tobytes())
    return rows[i], i


def _to_alloc(row: np.ndarray, n: int) -> Allocation:
    packed = np.packbits(row.astype(np.uint8), bitorder="little").tobytes()
    return Allocation(int.from_bytes(packed, "little"), n)


@dataclasses.dataclass(frozen=True)
class _Range:
    """Fixed candidate outcomes: the observed outputs plus the empty allocation."""

    outputs: tuple[Allocation, ...]
    bits: np.ndarray

    @classmethod
    def of(cls, observed, n: int) -> "_Range":
        outs = sorted(set(observed) | {Allocation.empty(n)}, key=lambda y: y.lex_key())
        return cls(tuple(outs), np.array([y.bits() for y in outs], dtype=np.uint8))

    def pick(self, x: TypeProfile, mode: "FeasibilityMode") -> tuple[Allocation, Allocation]:
        row, i = _best(self.bits, x, mode is FeasibilityMode.DOWNWARD_CLOSED)
        return _to_alloc(row, x.n), self.outputs[i]


class Transformation:
    """Base class. ``_run`` returns the allocation and the observed output it sits under."""

    id: str = ""

    def _run(
        self, ctx: TransformationContext, x: TypeProfile, rec: _Recorder
    ) -> tuple[Allocation, Allocation]:
        raise NotImplementedError

    def params(self) -> dict:
        return {}


class EmptyAllocation(Transformation):
    id = "empty"

    def _run(self, ctx, x, rec):
        empty = Allocation.empty(x.n)
        return empty, empty


class PassThrough(Transformation):
    id = "passthrough"

    def _run(self, ctx, x, rec):
        y = rec.query(x)
        return y, y


class ExhaustiveMIDR(Transformation):
    """Query the whole finite domain and return the best outcome in the observed range."""

    id = "exhaustive"

    def _run(self, ctx, x, rec):
        key = ("exhaustive", id(ctx.session))
        hit = ctx.cache.get(key)
        if hit is not None and hit[0] is ctx.session:
            # the whole domain is memoized in this session, so re-asking is free
            _, domain, rng_ = hit
            rec.asked.extend(domain)
            rec.seen.update(dict.fromkeys(rng_.outputs))
        else:
            p = ctx.prior.params
            domain = tuple(enumerate_profiles(p.n, ctx.prior.setting, p.alpha))
            outs = [rec.query(z) for z in domain]
            rng_ = _Range.of(outs, p.n)
            ctx.cache[key] = (ctx.session, domain, rng_)
        return rng_.pick(x, ctx.feasibility_mode)


@lru_cache(maxsize=256)
def _presample(prior: PriorDistribution, seed: int, q: int) -> tuple[TypeProfile, ...]:
    child = prior.with_seed(rng.derive_seed(seed, "presample"))
    return tuple(sample_profile(child, i) for i in range(q))


class PresampledRange(Transformation):
    """Fix a range from q prior samples chosen by the seed alone, then maximize within it."""

    id = "presampled"

    def __init__(self, q: int = 64) -> None:
        if q < 1:
            raise ConfigError("q must be positive")
        self.q = q

    def params(self) -> dict:
        return {"q": self.q}

    def _run(self, ctx, x, rec):
        probes = _presample(ctx.prior, ctx.seed, self.q)
        outs = tuple(rec.query(z) for z in probes)
        key = ("presampled", outs)
        rng_ = ctx.cache.get(key)
        if rng_ is None:
            rng_ = _Range.of(outs, x.n)
            ctx.cache[key] = rng_
        return rng_.pick(x, ctx.feasibility_mode)


CATALOG: dict[str, Callable[..., Transformation]] = {
    "empty": EmptyAllocation,
    "passthrough": PassThrough,
    "exhaustive": ExhaustiveMIDR,
    "presampled": PresampledRange,
}

_ALIASES = {
    "emptyallocation": "empty",
    "pass-through": "passthrough",
    "exhaustivemidr": "exhaustive",
    "exhaustive-midr": "exhaustive",
    "presampledrange": "presampled",
    "presampled-range": "presampled",
}


def make_transformation(tid: str, **kwargs) -> Transformation:
    key = tid.lower().replace("_", "-")
    key = _ALIASES.get(key, key)
    if key not in CATALOG:
        raise ConfigError(f"unknown transformation {tid!r}; known: {sorted(CATALOG)}")
    cls = CATALOG[key]
    if key == "presampled":
        return cls(**{k: v for k, v in kwargs.items() if k == "q"})
    return cls()


def _audit(y: Allocation, cert: Allocation, seen, mode: FeasibilityMode) -> None:
    if y.mask == 0:
        return
    if cert not in seen:
        raise FeasibilityViolation(f"{cert.to_json()} was never returned by the oracle")
    if mode is FeasibilityMode.RANGE_ONLY and y != cert:
        raise FeasibilityViolation(f"{y.to_json()} is not an observed output")
    if not y <= cert:
        raise FeasibilityViolation(f"{y.to_json()} is not below {cert.to_json()}")


def run(
    transformation: Transformation | str,
    ctx: TransformationContext,
    x: TypeProfile,
    strict: bool = False,
) -> MechanismOutput:
    """Compute M_A(x) and certify its feasibility against what this run observed.

    If the oracle budget runs out the output is the empty allocation with
    ``truncated=True``; ``strict=True`` re-raises instead.
    """
    t = make_transformation(transformation) if isinstance(transformation, str) else transformation
    rec = _Recorder(ctx.session)
    try:
        y, cert = t._run(ctx, x, rec)
    except BudgetExceeded:
        if strict:
            raise
        return MechanismOutput(Allocation.empty(x.n), tuple(rec.asked), truncated=True)
    _audit(y, cert, rec.seen, ctx.feasibility_mode)
    return MechanismOutput(y, tuple(rec.asked))


def as_rule(
    transformation: Transformation | str,
    ctx: TransformationContext,
) -> Callable[[TypeProfile], Allocation]:
    """The transformed allocation rule x -> M_A(x), sharing one context."""

    def rule(x: TypeProfile) -> Allocation:
        return run(transformation, ctx, x, strict=True).allocation

    return rule


def seeded_rule(
    transformation: Transformation | str,
    make_ctx: Callable[[int], TransformationContext],
) -> Callable[[int], Callable[[TypeProfile], Allocation]]:
    """seed -> deterministic realization of a randomized transformation."""
    return lambda seed: as_rule(transformation, make_ctx(seed))


def finite_domain(prior: PriorDistribution) -> tuple[TypeProfile, ...]:
    p = prior.params
    return tuple(enumerate_profiles(p.n, prior.setting, p.alpha))

