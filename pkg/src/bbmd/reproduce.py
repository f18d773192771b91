"""The reproduce suite: every checkable claim as a stream of deterministic JSON records.

Records carry no timings or other run-dependent data, so two runs with the
same configuration produce identical output.
"""

from __future__ import annotations

import dataclasses
import math
from fractions import Fraction
from typing import Any, Iterator, Mapping

import numpy as np

from . import fixtures, reference, rng
from .adversarial import AstRule, alloc_ast, is_feasible
from .analysis import (
    ExperimentConfig,
    ast_expected_welfare_exact,
    attack_experiment,
    chernoff_bound,
    exact_binomial_tail,
    expected_welfare_exact,
    expected_welfare_mc,
    mc_binomial_tail,
    welfare_floor_premise,
)
from .core import (
    Allocation,
    Setting,
    TypeProfile,
    enumerate_profiles,
    fraction_str,
    mask_to_indices,
    welfare,
)
from .errors import ConfigError
from .icverify import (
    check_bic_matching,
    check_midr,
    max_weight_matching,
    subsets_up_to,
    weakly_monotone,
)
from .oracle import OracleSession
from .transformations import FeasibilityMode, TransformationContext, as_rule, finite_domain


@dataclasses.dataclass(frozen=True)
class ReproduceConfig:
    seed: int = 0
    matrices: int = 1000
    max_matrix: int = 7
    rules: int = 10_000
    max_rule_n: int = 8
    chernoff_trials: int = 1_000_000
    calibration_trials: int = 200
    calibration_samples: int = 400
    presample_seeds: int = 3
    ladder_pairs: int = 4
    ladder_samples: int = 1000
    ladder_q: int = 64
    ladder_mode: str = "range-only"
    criteria: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8, 9)

    @classmethod
    def from_dict(cls, cfg: Mapping[str, Any]) -> "ReproduceConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(cfg) - known
        if extra:
            raise ConfigError(f"unknown reproduce keys: {sorted(extra)}")
        kw = {}
        for k, v in cfg.items():
            if k == "criteria":
                kw[k] = tuple(int(c) for c in v)
            elif k == "ladder_mode":
                kw[k] = FeasibilityMode.parse(v).value
            else:
                try:
                    kw[k] = int(v)
                except (TypeError, ValueError):
                    raise ConfigError(f"{k} must be an integer") from None
        return cls(**kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["criteria"] = list(self.criteria)
        return d


def _rec(criterion: int, check: str, ok: bool, **detail) -> dict:
    return {"criterion": criterion, "check": check, "pass": bool(ok), **detail}


# ----------------------------------------------------------------------------- 1, 2


def truth_table(cfg: ReproduceConfig) -> Iterator[dict]:
    fx = fixtures.get("n16")
    p, pair = fx.params, fx.require_pair()
    S, T = set(mask_to_indices(pair.S)), set(mask_to_indices(pair.T))
    ref = reference.ast_truth_table(p.n, S, T, p.N, p.eps_S_N, p.eps_T_N)
    bad = 0
    for m in range(1 << p.n):
        got = alloc_ast(TypeProfile.from_support(m, p.n), pair)
        if got.served != ref[m]:
            bad += 1
    yield _rec(1, "alloc_ast truth table", bad == 0, fixture="n16", inputs=1 << p.n, mismatches=bad)


def closure(cfg: ReproduceConfig) -> Iterator[dict]:
    fx = fixtures.get("n16")
    p, pair = fx.params, fx.require_pair()
    S, T = set(mask_to_indices(pair.S)), set(mask_to_indices(pair.T))
    table = reference.ast_truth_table(p.n, S, T, p.N, p.eps_S_N, p.eps_T_N)
    members = {sum(1 << i for i in out) for out in table}
    ref = reference.downward_closure(p.n, sorted(members))
    bad = sum(
        1 for m in range(1 << p.n) if is_feasible(Allocation(m, p.n), pair) != bool(ref[m])
    )
    yield _rec(
        2,
        "is_feasible vs brute-force closure",
        bad == 0,
        fixture="n16",
        range_size=len(members),
        feasible_sets=int(ref.sum()),
        mismatches=bad,
    )


# ----------------------------------------------------------------------------- 3


def random_matrix(g: np.random.Generator, k: int) -> list[list[Fraction]]:
    nums = g.integers(0, 30, size=(k, k))
    dens = g.integers(1, 8, size=(k, k))
    return [[Fraction(int(nums[i, j]), int(dens[i, j])) for j in range(k)] for i in range(k)]


def matching_engine(cfg: ReproduceConfig) -> Iterator[dict]:
    g = rng.generator(cfg.seed, "matrices")
    bad = 0
    for _ in range(cfg.matrices):
        k = int(g.integers(1, cfg.max_matrix + 1))
        W = random_matrix(g, k)
        perm, total = max_weight_matching(W)
        if total != reference.brute_max_matching(W) or sorted(perm) != list(range(k)):
            bad += 1
    yield _rec(3, "hungarian vs permutation brute force", bad == 0, matrices=cfg.matrices, mismatches=bad)


# ----------------------------------------------------------------------------- 4


def _transformed(fx, tid: str, mode: FeasibilityMode, seed: int = 0):
    sess = OracleSession(AstRule(fx.require_pair(), memo=True))
    ctx = TransformationContext(sess, fx.prior(rng.derive_seed(seed, "prior")), mode, seed)
    return as_rule(tid, ctx)


def ic_small(cfg: ReproduceConfig) -> Iterator[dict]:
    for fx in fixtures.with_role("small"):
        domain = list(finite_domain(fx.prior()))
        for mode in FeasibilityMode:
            rep = check_midr(_transformed(fx, "exhaustive", mode), domain)
            yield _rec(4, "exhaustive passes midr", rep is None, fixture=fx.name, mode=mode.value,
                       domain=len(domain), violation=rep.to_json() if rep else None)
            seeds = list(range(cfg.presample_seeds))
            factory = lambda s, fx=fx, mode=mode: _transformed(fx, "presampled", mode, s)
            per_seed = [check_midr(factory(s), domain) for s in seeds]
            averaged = check_midr(factory, domain, seeds)
            ok = all(r is None for r in per_seed) and averaged is None
            yield _rec(4, "presampled passes midr", ok, fixture=fx.name, mode=mode.value,
                       seeds=len(seeds), domain=len(domain))
    fx = fixtures.get("n16")
    pair = fx.require_pair()
    p = fx.params
    domain = list(enumerate_profiles(p.n, Setting.SINGLE, max_size=p.N))
    tin = pair.t_profile()
    pass_through = _transformed(fx, "passthrough", FeasibilityMode.RANGE_ONLY)
    rep = check_midr(pass_through, domain, focus=[tin])
    ok = rep is not None and rep.witness[0] == tin and rep.slack >= 1
    if rep is not None:
        v, w = rep.witness
        direct = welfare(v, alloc_ast(w, pair)) - welfare(v, alloc_ast(v, pair))
        ok = ok and direct == rep.slack and (alloc_ast(w, pair).mask & pair.T) != 0
    yield _rec(4, "passthrough violates midr", ok, fixture="n16", domain=len(domain),
               violation=rep.to_json() if rep else None)


# ----------------------------------------------------------------------------- 5


def random_rule(g: np.random.Generator, max_n: int):
    """A random deterministic rule on a small random domain; half of them max-in-range."""
    n = int(g.integers(1, max_n + 1))
    multi = bool(g.integers(0, 2))
    alpha = Fraction(int(g.integers(2, 9)), int(g.integers(1, 3)))
    if alpha <= 1:
        alpha = Fraction(2)
    setting = Setting.MULTI if multi else Setting.SINGLE
    vals = (0, 1, alpha) if multi else (0, 1)
    size = int(g.integers(2, min(7, len(vals) ** n) + 1))
    domain: dict[tuple, None] = {}
    while len(domain) < size:
        domain[tuple(vals[int(i)] for i in g.integers(0, len(vals), size=n))] = None
    profiles = [TypeProfile(v, setting) for v in domain]
    table: dict[TypeProfile, Allocation] = {}
    if g.integers(0, 2):
        for x in profiles:
            table[x] = Allocation(int(g.integers(0, 1 << n)), n)
    else:
        outs = [Allocation(int(m), n) for m in g.integers(0, 1 << n, size=int(g.integers(1, 4)))]
        for x in profiles:
            table[x] = max(outs, key=lambda y: (welfare(x, y), -y.mask))
    return profiles, table


def two_subsets(cfg: ReproduceConfig) -> Iterator[dict]:
    g = rng.generator(cfg.seed, "rules")
    disagree = passes = 0
    for _ in range(cfg.rules):
        profiles, table = random_rule(g, cfg.max_rule_n)
        matching_ok = check_bic_matching(table.__getitem__, subsets_up_to(profiles, 2)) is None
        direct_ok = weakly_monotone(table.__getitem__, profiles)
        disagree += matching_ok != direct_ok
        passes += direct_ok
    yield _rec(5, "2-subset matching vs weak monotonicity", disagree == 0, rules=cfg.rules,
               monotone_rules=passes, disagreements=disagree)


# ----------------------------------------------------------------------------- 6


def welfare_floor(cfg: ReproduceConfig) -> Iterator[dict]:
    for name, fx in sorted(fixtures.all_fixtures().items()):
        p = fx.params
        premise = welfare_floor_premise(p)
        value = ast_expected_welfare_exact(p, fx.setting)
        holds = premise >= Fraction(1, 2)
        rec = {
            "fixture": name,
            "premise": fraction_str(premise),
            "premise_float": float(premise),
            "premise_holds": holds,
            "welfare": fraction_str(value),
            "welfare_float": float(value),
            "floor": fraction_str(Fraction(p.N, 4)),
        }
        enumerated = None
        if fx.pair is not None and p.n <= 16 and (fx.setting is Setting.SINGLE or p.n <= 8):
            est = expected_welfare_exact(AstRule(fx.pair), fx.prior())
            enumerated = est.mean == value
            rec["enumeration_agrees"] = enumerated
        ok = (not holds or value >= Fraction(p.N, 4)) and enumerated is not False
        yield _rec(6, "welfare floor", ok, **rec)


# ----------------------------------------------------------------------------- 7


def chernoff_cases() -> list[tuple[int, Fraction, Fraction]]:
    out = []
    for mean in (Fraction(1, 2), Fraction(1), Fraction(2), Fraction(4), Fraction(8)):
        for factor in (Fraction(3), Fraction(7, 2), Fraction(4), Fraction(5)):
            out.append((64, mean / 64, factor * mean))
    return out


def chernoff(cfg: ReproduceConfig) -> Iterator[dict]:
    for i, (m, p, Y) in enumerate(chernoff_cases()):
        bound = chernoff_bound(m * p, Y)
        exact = exact_binomial_tail(m, p, Y)
        hat, se = mc_binomial_tail(m, p, Y, cfg.chernoff_trials, rng.derive_seed(cfg.seed, f"tail/{i}"))
        ok = exact <= Fraction(bound) and hat <= bound + 3 * se
        yield _rec(7, "chernoff tail", ok, m=m, p=fraction_str(p), mean=fraction_str(m * p),
                   Y=fraction_str(Y), bound=bound, exact=float(exact), mc=hat, mc_se=se)


# ----------------------------------------------------------------------------- 8


def calibration(cfg: ReproduceConfig) -> Iterator[dict]:
    fx = fixtures.get("n16")
    rule = AstRule(fx.require_pair(), memo=True)
    prior = fx.prior()
    exact = ast_expected_welfare_exact(fx.params)
    covered = 0
    for t in range(cfg.calibration_trials):
        est = expected_welfare_mc(rule, prior, cfg.calibration_samples, rng.derive_seed(cfg.seed, f"mc/{t}"))
        covered += est.ci_low <= exact <= est.ci_high
    rate = covered / cfg.calibration_trials
    yield _rec(8, "monte carlo coverage", rate >= 0.9, trials=cfg.calibration_trials,
               samples=cfg.calibration_samples, exact=float(exact), coverage=rate)


# ----------------------------------------------------------------------------- 9


def inversions(seq: list[float]) -> int:
    return sum(1 for a, b in zip(seq, seq[1:]) if b > a)


def ladder(cfg: ReproduceConfig) -> Iterator[dict]:
    ratios = []
    for fx in fixtures.ladder():
        ec = ExperimentConfig(
            params=fx.params.to_dict(),
            setting=fx.setting,
            transformation="presampled",
            q=cfg.ladder_q,
            mode=FeasibilityMode.parse(cfg.ladder_mode),
            pair_seed=rng.derive_seed(cfg.seed, "pairs"),
            pairs=cfg.ladder_pairs,
            seed=cfg.seed,
            samples=cfg.ladder_samples,
            name=fx.name,
        )
        rows = list(attack_experiment(ec))
        for r in rows:
            yield {"criterion": 9, "check": "ladder row", "fixture": fx.name, "report": r.to_json()}
        vals = [r.ratio for r in rows if r.ratio is not None]
        ratios.append(float(np.mean(vals)) if vals else math.nan)
    inv = inversions(ratios)
    names = [fx.name for fx in fixtures.ladder()]
    ok = inv <= 1 and not any(math.isnan(r) for r in ratios)
    yield _rec(9, "degradation trend", ok, fixtures=names, ratios=ratios, inversions=inv, q=cfg.ladder_q)


SUITE = {
    1: truth_table,
    2: closure,
    3: matching_engine,
    4: ic_small,
    5: two_subsets,
    6: welfare_floor,
    7: chernoff,
    8: calibration,
    9: ladder,
}


def run_suite(cfg: ReproduceConfig | None = None) -> Iterator[dict]:
    """All records, then one summary record with a verdict per criterion."""
    cfg = cfg or ReproduceConfig()
    yield {"config": cfg.to_dict()}
    verdicts: dict[int, bool] = {}
    for c in cfg.criteria:
        if c not in SUITE:
            raise ConfigError(f"unknown criterion {c}")
        for rec in SUITE[c](cfg):
            if "pass" in rec:
                verdicts[c] = verdicts.get(c, True) and rec["pass"]
            yield rec
    yield {"summary": {str(c): verdicts.get(c, False) for c in cfg.criteria},
           "pass": all(verdicts.get(c, False) for c in cfg.criteria)}
