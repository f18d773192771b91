"""Type profiles, allocations, welfare, parameters and the two priors."""

from __future__ import annotations

import dataclasses
import enum
import itertools
import math
from decimal import ROUND_FLOOR, Decimal, localcontext
from fractions import Fraction
from functools import cached_property
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from . import rng
from .errors import ConfigError, ParameterInfeasible, StructuralError

Rational = int | Fraction


def _exact(v: Any) -> Rational:
    if type(v) is int:
        return v
    f = Fraction(v)
    return f.numerator if f.denominator == 1 else f


def fraction_str(v: Rational) -> str:
    return str(Fraction(v))


class Setting(str, enum.Enum):
    SINGLE = "single"
    MULTI = "multi"

    @classmethod
    def parse(cls, value: "str | Setting") -> "Setting":
        if isinstance(value, Setting):
            return value
        aliases = {
            "single": cls.SINGLE,
            "singleparameter": cls.SINGLE,
            "single-parameter": cls.SINGLE,
            "multi": cls.MULTI,
            "multidimensional": cls.MULTI,
            "multi-dimensional": cls.MULTI,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ConfigError(f"unknown setting {value!r}") from None


@dataclasses.dataclass(frozen=True)
class TypeProfile:
    """One reported type vector; coordinate i is the value for item/agent i."""

    values: tuple[Rational, ...]
    setting: Setting = Setting.SINGLE

    def __post_init__(self) -> None:
        vals = self.values
        if not all(type(v) is int for v in vals):
            vals = tuple(_exact(v) for v in vals)
        elif type(vals) is not tuple:
            vals = tuple(vals)
        if self.setting is Setting.SINGLE:
            if not set(vals) <= {0, 1}:
                raise StructuralError("single-parameter profiles are binary")
        elif min(vals, default=0) < 0:
            raise StructuralError("profile values must be non-negative")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_support(
        cls,
        support: int | Iterable[int],
        n: int,
        setting: Setting = Setting.SINGLE,
        value: Rational = 1,
    ) -> "TypeProfile":
        """Profile with ``value`` on the given indices (or bitmask) and 0 elsewhere."""
        mask = support if isinstance(support, int) else indices_to_mask(support, n)
        if mask >> n:
            raise StructuralError(f"support {mask:#x} exceeds n={n}")
        v = _exact(value)
        return cls(tuple(v if (mask >> i) & 1 else 0 for i in range(n)), setting)

    @property
    def n(self) -> int:
        return len(self.values)

    @cached_property
    def support(self) -> int:
        """Bitmask of the non-zero coordinates (bit i is coordinate i)."""
        m = 0
        for i, v in enumerate(self.values):
            if v:
                m |= 1 << i
        return m

    @property
    def size(self) -> int:
        return self.support.bit_count()

    def scaled(self) -> tuple[np.ndarray, int]:
        """Integer values and the common denominator they were scaled by."""
        den = math.lcm(*(v.denominator for v in self.values if isinstance(v, Fraction)))
        return np.array([int(v * den) for v in self.values], dtype=np.int64), den

    def support_list(self) -> list[int]:
        return mask_to_indices(self.support)

    def to_json(self) -> dict:
        out: dict = {"support": self.support_list()}
        if self.setting is Setting.MULTI:
            out["values"] = [fraction_str(self.values[i]) for i in out["support"]]
        return out


@dataclasses.dataclass(frozen=True)
class Allocation:
    """A binary outcome: ``mask`` has bit i set iff index i is served."""

    mask: int
    n: int

    def __post_init__(self) -> None:
        if self.mask < 0 or self.mask >> self.n:
            raise StructuralError(f"allocation {self.mask:#x} out of range for n={self.n}")

    @classmethod
    def empty(cls, n: int) -> "Allocation":
        return cls(0, n)

    @classmethod
    def of(cls, indices: Iterable[int], n: int) -> "Allocation":
        return cls(indices_to_mask(indices, n), n)

    @property
    def served(self) -> frozenset[int]:
        return frozenset(mask_to_indices(self.mask))

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __le__(self, other: "Allocation") -> bool:
        return self.n == other.n and self.mask & ~other.mask == 0

    def bits(self) -> np.ndarray:
        return mask_to_bits(self.mask, self.n)

    def lex_key(self) -> bytes:
        """Sort key matching lexicographic order of the bitstring y_0 y_1 ... y_{n-1}."""
        return self.bits().tobytes()

    def to_json(self) -> list[int]:
        return mask_to_indices(self.mask)


def indices_to_mask(indices: Iterable[int], n: int) -> int:
    m = 0
    for i in indices:
        if not 0 <= i < n:
            raise StructuralError(f"index {i} outside [0, {n})")
        m |= 1 << i
    return m


def mask_to_indices(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def mask_to_bits(mask: int, n: int) -> np.ndarray:
    raw = np.frombuffer(mask.to_bytes((n + 7) // 8 or 1, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n].copy()


def welfare(x: TypeProfile, y: Allocation) -> Rational:
    """Sum of x_i over the served indices."""
    if x.n != y.n:
        raise StructuralError(f"profile has n={x.n}, allocation has n={y.n}")
    m = y.mask & x.support
    total: Rational = 0
    while m:
        low = m & -m
        total += x.values[low.bit_length() - 1]
        m ^= low
    return total


# --------------------------------------------------------------------------- params


@dataclasses.dataclass(frozen=True)
class Params:
    n: int
    epsilon: Fraction
    N: int
    eps_ST_N: int
    eps_S_N: int
    eps_T_N: int
    alpha: Fraction
    bernoulli_q: Fraction

    def validate(self) -> "Params":
        problems = []
        if self.n <= 0 or self.N <= 0:
            problems.append("n and N must be positive")
        if self.N % 2:
            problems.append(f"N={self.N} must be even")
        if self.N > self.n:
            problems.append(f"N={self.N} exceeds n={self.n}")
        if not 1 <= self.eps_ST_N <= self.N // 2:
            problems.append(f"eps_ST_N={self.eps_ST_N} not in [1, N/2]")
        if self.eps_S_N != 2 * self.eps_ST_N:
            problems.append("eps_S_N must equal 2*eps_ST_N")
        if self.eps_T_N < 1:
            problems.append("eps_T_N must be positive")
        if self.epsilon <= 0:
            problems.append("epsilon must be positive")
        if self.eps_ST_N >= 1 and self.alpha != Fraction(self.N, self.eps_ST_N):
            problems.append(f"alpha={self.alpha} must equal N/eps_ST_N")
        if self.n > 0 and self.bernoulli_q != Fraction(3 * self.N, 4 * self.n):
            problems.append("bernoulli_q must equal 3N/(4n)")
        if not 0 < self.bernoulli_q < 1:
            problems.append(f"bernoulli_q={self.bernoulli_q} not in (0, 1)")
        if self.alpha <= 1:
            problems.append("alpha must exceed 1")
        if problems:
            raise ParameterInfeasible("; ".join(problems))
        return self

    @property
    def half(self) -> int:
        return self.N // 2

    @property
    def eps_ST(self) -> Fraction:
        return Fraction(self.eps_ST_N, self.N)

    def lemma3_hypothesis(self) -> bool:
        """Whether eps_ST > 2N/n, the density condition used for the query bound on T."""
        return self.eps_ST > Fraction(2 * self.N, self.n)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "epsilon": fraction_str(self.epsilon),
            "N": self.N,
            "eps_ST_N": self.eps_ST_N,
            "eps_S_N": self.eps_S_N,
            "eps_T_N": self.eps_T_N,
            "alpha": fraction_str(self.alpha),
            "bernoulli_q": fraction_str(self.bernoulli_q),
        }


DEFAULT_EPSILON = Fraction(1, 20)
_PARAM_KEYS = ("n", "epsilon", "N", "eps_ST_N", "eps_S_N", "eps_T_N", "alpha", "bernoulli_q")


def _round_half_up(x: Decimal) -> int:
    return int((x + Decimal("0.5")).to_integral_value(rounding=ROUND_FLOOR))


def _raw_derive(n: int, epsilon: Fraction) -> dict:
    with localcontext() as ctx:
        ctx.prec = 60
        dn = Decimal(n)
        e = Decimal(epsilon.numerator) / Decimal(epsilon.denominator)
        N = _round_half_up(dn ** (Decimal("0.5") + 2 * e))
        if N % 2:
            N += 1
        quarter = dn ** Decimal("0.25")
        eps_ST_N = max(1, _round_half_up(Decimal(N) / quarter))
        eps_T_N = max(1, _round_half_up(16 * Decimal(N) / dn.sqrt()))
    return {
        "n": n,
        "epsilon": epsilon,
        "N": N,
        "eps_ST_N": eps_ST_N,
        "eps_S_N": 2 * eps_ST_N,
        "eps_T_N": eps_T_N,
        "alpha": Fraction(N, eps_ST_N),
        "bernoulli_q": Fraction(3 * N, 4 * n),
    }


def derive_params(n: int, epsilon: Any = DEFAULT_EPSILON) -> Params:
    """Integer parameters from the asymptotic settings N = n^(1/2+2eps), eps_ST = n^(-1/4), ...

    Values are rounded half-up; N is then bumped to the next even integer.
    """
    if n < 4:
        raise ParameterInfeasible(f"n={n} is below the minimum of 4")
    eps = Fraction(epsilon)
    raw = _raw_derive(n, eps)
    if raw["eps_S_N"] > raw["N"] // 2:
        raise ParameterInfeasible(
            f"n={n}: eps_S_N={raw['eps_S_N']} exceeds N/2={raw['N'] // 2}; use explicit params"
        )
    if raw["bernoulli_q"] >= 1:
        raise ParameterInfeasible(f"n={n}: bernoulli_q={raw['bernoulli_q']} >= 1")
    return Params(**raw).validate()


def params_from_config(cfg: Mapping[str, Any]) -> Params:
    """Build Params from config keys; explicit keys override derived values.

    ``alpha`` and ``bernoulli_q`` follow N, eps_ST_N and n unless given, and
    ``eps_S_N`` follows eps_ST_N.
    """
    if "n" not in cfg:
        raise ConfigError("params need at least 'n'")
    try:
        n = int(cfg["n"])
        eps = Fraction(str(cfg.get("epsilon", DEFAULT_EPSILON)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad n/epsilon: {exc}") from None
    vals = _raw_derive(n, eps) if n >= 1 else {"n": n, "epsilon": eps}
    explicit = {k: cfg[k] for k in _PARAM_KEYS if k in cfg and k not in ("n", "epsilon")}
    try:
        for k in ("N", "eps_ST_N", "eps_S_N", "eps_T_N"):
            if k in explicit:
                vals[k] = int(explicit[k])
        if "eps_S_N" not in explicit:
            vals["eps_S_N"] = 2 * vals["eps_ST_N"]
        vals["alpha"] = Fraction(str(explicit.get("alpha", Fraction(vals["N"], vals["eps_ST_N"]))))
        vals["bernoulli_q"] = Fraction(
            str(explicit.get("bernoulli_q", Fraction(3 * vals["N"], 4 * n)))
        )
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad parameter value: {exc}") from None
    return Params(**vals).validate()


# --------------------------------------------------------------------------- priors


@dataclasses.dataclass(frozen=True)
class PriorDistribution:
    params: Params
    setting: Setting = Setting.SINGLE
    seed: int = 0

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def alpha(self) -> Fraction:
        return self.params.alpha

    def to_dict(self) -> dict:
        return {**self.params.to_dict(), "setting": self.setting.value, "seed": self.seed}

    @classmethod
    def from_dict(cls, cfg: Mapping[str, Any]) -> "PriorDistribution":
        return cls(
            params_from_config(cfg),
            Setting.parse(cfg.get("setting", "single")),
            int(cfg.get("seed", 0)),
        )

    def with_seed(self, seed: int) -> "PriorDistribution":
        return dataclasses.replace(self, seed=seed)


def sample_profile(dist: PriorDistribution, index: int) -> TypeProfile:
    """The ``index``-th profile of the prior's deterministic stream."""
    n = dist.n
    p = dist.params
    if dist.setting is Setting.SINGLE:
        words = rng.raw_words(dist.seed, "profile", index, n)
        hit = words < rng.threshold(p.bernoulli_q)
        return TypeProfile(tuple(hit.astype(np.int64).tolist()), Setting.SINGLE)
    words = rng.raw_words(dist.seed, "profile", index, 2 * n)
    hit = words[:n] < rng.threshold(p.bernoulli_q)
    high = words[n:] < rng.threshold(1 / p.alpha)
    a = _exact(p.alpha)
    vals = tuple((a if h else 1) if b else 0 for b, h in zip(hit.tolist(), high.tolist()))
    return TypeProfile(vals, Setting.MULTI)


def sample_support(dist: PriorDistribution, index: int) -> int:
    """Support bitmask of ``sample_profile(dist, index)`` without building the profile."""
    words = rng.raw_words(dist.seed, "profile", index, dist.n)
    hit = words < rng.threshold(dist.params.bernoulli_q)
    return int.from_bytes(np.packbits(hit, bitorder="little").tobytes(), "little")


def domain_values(setting: Setting, alpha: Rational) -> tuple[Rational, ...]:
    return (0, 1) if setting is Setting.SINGLE else (0, 1, _exact(alpha))


def enumerate_profiles(
    n: int, setting: Setting = Setting.SINGLE, alpha: Rational = 2, max_size: int | None = None
) -> Iterator[TypeProfile]:
    """Every profile of the finite domain, optionally only those with |support| <= max_size.

    Single-parameter profiles come in bitmask order.
    """
    if setting is Setting.SINGLE:
        for m in range(1 << n):
            if max_size is None or m.bit_count() <= max_size:
                yield TypeProfile.from_support(m, n)
        return
    vals = domain_values(setting, alpha)
    for combo in itertools.product(vals, repeat=n):
        if max_size is None or sum(1 for v in combo if v) <= max_size:
            yield TypeProfile(tuple(reversed(combo)), Setting.MULTI)


def profile_probability(x: TypeProfile, dist: PriorDistribution) -> Fraction:
    q = dist.params.bernoulli_q
    k = x.size
    pr = q**k * (1 - q) ** (x.n - k)
    if dist.setting is Setting.MULTI:
        a = dist.params.alpha
        high = sum(1 for v in x.values if v == a)
        pr *= (1 / a) ** high * (1 - 1 / a) ** (k - high)
    return pr
