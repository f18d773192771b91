"""Welfare estimation, tail bounds, and the adversarial attack experiment."""

from __future__ import annotations

import dataclasses
import math
from fractions import Fraction
from typing import Any, Callable, Iterator, Mapping, Sequence

import numpy as np

from . import rng
from .adversarial import (
    AstRule,
    Conditioning,
    PairDistribution,
    ValidPair,
    sample_valid_pair,
)
from .core import (
    Allocation,
    Params,
    PriorDistribution,
    Rational,
    Setting,
    TypeProfile,
    enumerate_profiles,
    fraction_str,
    params_from_config,
    sample_profile,
    welfare,
)
from .errors import (
    BudgetExceeded,
    ConfigError,
    DomainTooLarge,
    HypothesisViolated,
    ParameterInfeasible,
)
from .icverify import check_bic_matching, check_midr, targeted_subsets
from .oracle import OracleSession
from .transformations import (
    FeasibilityMode,
    TransformationContext,
    make_transformation,
    run,
)

Rule = Callable[[TypeProfile], Allocation]

EXACT_LIMITS = {Setting.SINGLE: 20, Setting.MULTI: 13}
Z95 = 1.959963984540054


@dataclasses.dataclass(frozen=True)
class WelfareEstimate:
    mean: Rational | float
    ci_low: float
    ci_high: float
    method: str  # "exact" or "monte-carlo"
    samples: int

    def __post_init__(self) -> None:
        if self.method not in ("exact", "monte-carlo"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.ci_low <= float(self.mean) <= self.ci_high:
            raise ValueError("mean outside its interval")

    def to_json(self) -> dict:
        out: dict = {
            "method": self.method,
            "mean": float(self.mean),
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "samples": self.samples,
        }
        if self.method == "exact":
            out["exact"] = fraction_str(self.mean)  # type: ignore[arg-type]
        return out

    @property
    def width(self) -> float:
        return self.ci_high - self.ci_low


def _exact_estimate(value: Rational, count: int) -> WelfareEstimate:
    f = float(value)
    return WelfareEstimate(value, f, f, "exact", count)


def estimate_from_samples(values: Sequence[float] | np.ndarray) -> WelfareEstimate:
    """Sample mean with a normal-approximation 95% interval."""
    v = np.asarray(values, dtype=np.float64)
    m = len(v)
    if m < 2:
        raise ValueError("need at least 2 samples")
    mean = float(v.mean())
    half = Z95 * float(v.std(ddof=1)) / math.sqrt(m)
    return WelfareEstimate(mean, mean - half, mean + half, "monte-carlo", m)


def expected_welfare_exact(
    rule: Rule, prior: PriorDistribution, limit: int | None = None
) -> WelfareEstimate:
    """Sum over the whole domain of Pr[x] * Wel(rule(x), x), exactly."""
    n = prior.n
    cap = EXACT_LIMITS[prior.setting] if limit is None else limit
    if n > cap:
        raise DomainTooLarge(
            f"n={n} exceeds the enumeration limit {cap}; use expected_welfare_mc instead"
        )
    p = prior.params
    q = p.bernoulli_q
    alpha = p.alpha
    # probability depends only on (support size, number of alpha coordinates)
    sums: dict[tuple[int, int], Rational] = {}
    count = 0
    for x in enumerate_profiles(n, prior.setting, alpha):
        count += 1
        w = welfare(x, rule(x))
        if w:
            high = 0 if prior.setting is Setting.SINGLE else sum(1 for v in x.values if v == alpha)
            key = (x.size, high)
            sums[key] = sums.get(key, 0) + w
    total = Fraction(0)
    for (k, high), w in sums.items():
        pr = q**k * (1 - q) ** (n - k)
        if prior.setting is Setting.MULTI:
            pr *= (1 / alpha) ** high * (1 - 1 / alpha) ** (k - high)
        total += pr * w
    return _exact_estimate(total, count)


def expected_welfare_mc(
    rule: Rule, prior: PriorDistribution, samples: int, seed: int | None = None
) -> WelfareEstimate:
    """Monte Carlo welfare over ``samples`` prior draws; deterministic given the seed."""
    if samples < 2:
        raise ValueError("samples must be at least 2")
    src = prior if seed is None else prior.with_seed(seed)
    vals = []
    for i in range(samples):
        x = sample_profile(src, i)
        vals.append(float(welfare(x, rule(x))))
    return estimate_from_samples(vals)


# --------------------------------------------------------------------------- tails


def chernoff_bound(mean: Rational | float, Y: Rational | float) -> float:
    """e^(-Y/4), valid for Pr[X > Y] when X sums independent indicators and Y >= 3 E[X]."""
    if Fraction(Y) < 3 * Fraction(mean):
        raise HypothesisViolated(f"Y={Y} is below 3*mean={3 * Fraction(mean)}")
    return math.exp(-float(Y) / 4)


def exact_binomial_tail(m: int, p: Rational, Y: Rational) -> Fraction:
    """Pr[Bin(m, p) > Y] as an exact fraction."""
    p = Fraction(p)
    lo = math.floor(Fraction(Y)) + 1
    return sum(
        (math.comb(m, k) * p**k * (1 - p) ** (m - k) for k in range(max(lo, 0), m + 1)),
        Fraction(0),
    )


def mc_binomial_tail(m: int, p: Rational, Y: Rational, trials: int, seed: int) -> tuple[float, float]:
    """Empirical Pr[Bin(m, p) > Y] and its standard error."""
    g = rng.generator(seed, "binomial-tail", m)
    draws = g.binomial(m, float(p), size=trials)
    hat = float(np.mean(draws > float(Y)))
    return hat, math.sqrt(max(hat * (1 - hat), 0.0) / trials)


# --------------------------------------------------------------------------- region counts
#
# For a fixed valid pair, an i.i.d. prior splits into four independent
# binomial counts: x in S-T, S&T, T-S and outside S|T. Everything about
# A_{S,T} depends only on those counts, so its exact statistics are sums
# over at most (N/2+1)^3 (N+1) cells, done here in big integers.


def _binomial_weights(m: int, a: int, b: int) -> list[int]:
    """C(m,k) a^k (b-a)^(m-k) for k = 0..m; divide by b^m for probabilities."""
    return [math.comb(m, k) * a**k * (b - a) ** (m - k) for k in range(m + 1)]


def _region_sizes(p: Params) -> tuple[int, int, int, int]:
    h, k = p.half, p.eps_ST_N
    return h - k, k, h - k, p.n - p.N + k


def _nonzero_mean(p: Params, setting: Setting) -> Fraction:
    return Fraction(1) if setting is Setting.SINGLE else 2 - 1 / p.alpha


def _region_sum(p: Params, keep: Callable[[int, int, int], bool], moment: bool) -> Fraction:
    """Sum over region counts (i, j, l, m) with i+j+l+m <= N and keep(i, j, l) of Pr * (size or 1)."""
    q = p.bernoulli_q
    a, b = q.numerator, q.denominator
    r1, r2, r3, r4 = _region_sizes(p)
    w1, w2, w3, w4 = (_binomial_weights(r, a, b) for r in (r1, r2, r3, r4))
    cdf = [0]
    mom = [0]
    for m, w in enumerate(w4):
        cdf.append(cdf[-1] + w)
        mom.append(mom[-1] + m * w)
    total = 0
    for i, wi in enumerate(w1):
        for j, wj in enumerate(w2):
            for l, wl in enumerate(w3):
                s = i + j + l
                if s > p.N or not keep(i, j, l):
                    continue
                top = min(p.N - s, r4) + 1
                inner = s * cdf[top] + mom[top] if moment else cdf[top]
                total += wi * wj * wl * inner
    return Fraction(total, b**p.n)


def ast_expected_welfare_exact(params: Params, setting: Setting = Setting.SINGLE) -> Fraction:
    """Exact Wel(A_{S,T}) under the prior; the value does not depend on which valid pair."""
    p = params

    def allowed(i: int, j: int, l: int) -> bool:
        return j + l <= p.eps_T_N or i + j >= p.eps_S_N

    return _region_sum(p, allowed, moment=True) * _nonzero_mean(p, setting)


def welfare_floor_premise(params: Params) -> Fraction:
    """Pr[|x| in [N/2, N] and |x & T| <= eps_T_N] under the prior, exactly."""
    p = params
    q = p.bernoulli_q
    a, b = q.numerator, q.denominator
    h = p.half
    wt = _binomial_weights(h, a, b)
    wr = _binomial_weights(p.n - h, a, b)
    total = 0
    for t in range(min(p.eps_T_N, h) + 1):
        lo, hi = max(h - t, 0), min(p.N - t, p.n - h)
        if lo <= hi:
            total += wt[t] * sum(wr[lo : hi + 1])
    return Fraction(total, b**p.n)


def query_success_probability(params: Params) -> Fraction:
    """Chance that one prior-drawn query x reveals T: A(x) = x with |x & T| > eps_T_N.

    Over a fixed pair (equivalently a random S for fixed T), since x is drawn
    independently of the pair.
    """
    p = params

    def reveals(i: int, j: int, l: int) -> bool:
        return j + l > p.eps_T_N and i + j >= p.eps_S_N

    return _region_sum(p, reveals, moment=False)


def log_zeta(params: Params) -> float:
    """log of 2 e^(n^eps) e^(-eps_T N / 6), the indistinguishability slack (diagnostic only)."""
    return math.log(2) + params.n ** float(params.epsilon) - params.eps_T_N / 6


def welfare_ceiling(params: Params, setting: Setting) -> Fraction:
    return Fraction(params.N) * (params.alpha if setting is Setting.MULTI else 1)


# --------------------------------------------------------------------------- attack experiment


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    params: Mapping[str, Any]
    setting: Setting = Setting.SINGLE
    transformation: str = "presampled"
    q: int = 64
    mode: FeasibilityMode = FeasibilityMode.RANGE_ONLY
    budget: int | None = None
    pair_seed: int = 0
    pairs: int = 4
    seed: int = 0
    samples: int = 500
    ic_domain: int = 64
    lemma4_draws: int = 0
    lemma4_max_tries: int = 10_000
    name: str = ""

    @classmethod
    def from_dict(cls, cfg: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(cfg) - known
        if extra:
            raise ConfigError(f"unknown experiment keys: {sorted(extra)}")
        if "params" not in cfg:
            raise ConfigError("experiment config needs 'params'")
        kw = dict(cfg)
        kw["params"] = dict(cfg["params"])
        if "setting" in kw:
            kw["setting"] = Setting.parse(kw["setting"])
        if "mode" in kw:
            kw["mode"] = FeasibilityMode.parse(kw["mode"])
        for key in ("q", "pairs", "seed", "pair_seed", "samples", "ic_domain", "lemma4_draws"):
            if key in kw:
                try:
                    kw[key] = int(kw[key])
                except (TypeError, ValueError):
                    raise ConfigError(f"{key} must be an integer") from None
        if kw.get("budget") is not None:
            kw["budget"] = int(kw["budget"])
        if kw.get("samples", 2) < 2:
            raise ConfigError("samples must be at least 2")
        return cls(**kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["params"] = {k: (fraction_str(v) if isinstance(v, Fraction) else v) for k, v in self.params.items()}
        d["setting"] = self.setting.value
        d["mode"] = self.mode.value
        return d


@dataclasses.dataclass
class ExperimentReport:
    row: int
    status: str
    config: dict
    instance: dict | None = None
    transformation: dict | None = None
    welfare_alg: WelfareEstimate | None = None
    welfare_alg_exact: Fraction | None = None
    welfare_mech: WelfareEstimate | None = None
    ratio: float | None = None
    queries_per_input: dict | None = None
    truncated_inputs: int = 0
    lemma3: dict | None = None
    lemma5: dict | None = None
    lemma4: dict | None = None
    ic_status: dict | None = None
    diagnostics: dict | None = None
    error: str | None = None

    def to_json(self) -> dict:
        out: dict = {"row": self.row, "status": self.status, "config": self.config}
        if self.error is not None:
            out["error"] = self.error
        if self.status != "ok" and self.welfare_mech is None:
            return out
        out.update(
            instance=self.instance,
            transformation=self.transformation,
            welfare_alg=self.welfare_alg.to_json() if self.welfare_alg else None,
            welfare_alg_exact=(
                None if self.welfare_alg_exact is None else fraction_str(self.welfare_alg_exact)
            ),
            welfare_mech=self.welfare_mech.to_json() if self.welfare_mech else None,
            ratio=self.ratio,
            queries_per_input=self.queries_per_input,
            truncated_inputs=self.truncated_inputs,
            lemma3=self.lemma3,
            lemma5=self.lemma5,
            lemma4=self.lemma4,
            ic_status=self.ic_status,
            diagnostics=self.diagnostics,
        )
        return out


class _Runner:
    """Runs the transformation against one hidden pair, one session per input."""

    def __init__(self, cfg: ExperimentConfig, params: Params, pair: ValidPair) -> None:
        self.cfg = cfg
        self.params = params
        self.pair = pair
        self.rule = AstRule(pair, memo=True)
        self.t = make_transformation(cfg.transformation, q=cfg.q)
        self.prior = PriorDistribution(params, cfg.setting, rng.derive_seed(cfg.seed, "transformation"))
        self.cache: dict = {}
        # with no budget one shared session keeps the exhaustive baseline affordable;
        # per-input query counts come from each run's own audit either way
        self.shared = OracleSession(self.rule) if cfg.budget is None else None

    def session(self) -> OracleSession:
        return self.shared or OracleSession(self.rule, self.cfg.budget)

    def __call__(self, x: TypeProfile):
        sess = self.session()
        ctx = TransformationContext(sess, self.prior, self.cfg.mode, self.cfg.seed, self.cache)
        return run(self.t, ctx, x), sess


def _t_input(pair: ValidPair, setting: Setting, params: Params) -> TypeProfile:
    return pair.t_profile(setting, params.alpha if setting is Setting.MULTI else 1)


def _lemma4(runner: _Runner, row: int) -> dict:
    """Rejection-sample T ~ Gamma_S given x & T = S & T, for x = S plus extra coordinates."""
    cfg, p, pair = runner.cfg, runner.params, runner.pair
    g = rng.generator(cfg.seed, "lemma4/x", row)
    outside = [i for i in range(p.n) if not (pair.S >> i) & 1]
    extra = g.choice(outside, size=p.N // 4, replace=False).tolist() if p.N // 4 else []
    xmask = pair.S
    for i in extra:
        xmask |= 1 << i
    x = TypeProfile.from_support(xmask, p.n, cfg.setting)
    pd = PairDistribution(p, rng.derive_seed(cfg.seed, f"lemma4/{row}"), Conditioning.FIXED_S, pair.S)
    tries, vals = 0, []
    idx = 0
    while len(vals) < cfg.lemma4_draws and tries < cfg.lemma4_max_tries:
        cand = sample_valid_pair(pd, idx)
        idx += 1
        tries += 1
        if xmask & cand.T != pair.S & cand.T:
            continue
        sub = _Runner(cfg, p, cand)
        out, _ = sub(x)
        vals.append(float(welfare(x, out.allocation)))
    eps_T = p.eps_T_N / p.N
    lz = log_zeta(p)
    zeta = math.exp(lz) if lz < 700 else None
    return {
        "x": x.to_json(),
        "accepted": len(vals),
        "tries": tries,
        "acceptance_rate": len(vals) / tries if tries else 0.0,
        "mean_welfare": float(np.mean(vals)) if vals else None,
        "bound": None if zeta is None else 4 * p.N * (eps_T + zeta) / float(p.eps_ST),
    }


def _attack_row(cfg: ExperimentConfig, params: Params, row: int) -> ExperimentReport:
    base = {"row": row, "config": cfg.to_dict()}
    pd = PairDistribution(params, cfg.pair_seed)
    pair = sample_valid_pair(pd, row)
    runner = _Runner(cfg, params, pair)
    mc_prior = PriorDistribution(params, cfg.setting, rng.derive_seed(cfg.seed, "inputs"))
    inputs = [sample_profile(mc_prior, i) for i in range(cfg.samples)]

    w_alg, w_mech, queries = [], [], []
    outputs: dict[TypeProfile, Allocation] = {}
    truncated = 0
    for x in inputs:
        out, _ = runner(x)
        outputs[x] = out.allocation
        truncated += out.truncated
        queries.append(out.queries)
        w_alg.append(float(welfare(x, runner.rule(x))))
        w_mech.append(float(welfare(x, out.allocation)))
    alg = estimate_from_samples(w_alg)
    mech = estimate_from_samples(w_mech)
    ratio = mech.mean / alg.mean if alg.mean > 0 else None

    # lemma-3 event: on input T, did any billed query expose T through the S-branch?
    tin = _t_input(pair, cfg.setting, params)
    t_out, t_sess = runner(tin)
    outputs[tin] = t_out.allocation
    hits = sum(
        1
        for z in dict.fromkeys(t_out.audit)
        if (t_sess.memo[z].mask & pair.T).bit_count() > params.eps_T_N
    )
    lemma3 = {
        "event": hits > 0,
        "revealing_queries": hits,
        "queries": t_out.queries,
        "welfare_on_T": fraction_str(welfare(tin, t_out.allocation)),
        "per_query_probability": float(query_success_probability(params)),
    }

    # lemma-5: welfare on inputs that barely meet T
    low = [w for x, w in zip(inputs, w_mech) if 2 * (x.support & pair.T).bit_count() <= params.eps_T_N]
    lemma5 = {
        "inputs": len(low),
        "mean_welfare": float(np.mean(low)) if low else None,
        "bound": 5 * params.eps_T_N / float(params.eps_ST),
    }

    lookup = outputs.__getitem__
    dom = list(dict.fromkeys(inputs[: cfg.ic_domain] + [tin]))
    if cfg.setting is Setting.SINGLE:
        rep = check_midr(lookup, dom, focus=[tin])
        ic = {"check": "midr", "domain": len(dom), "pass": rep is None}
    else:
        fam = list(targeted_subsets(dom, pair, params.alpha))
        rep = check_bic_matching(lookup, fam)
        ic = {"check": "matching-targeted", "subsets": len(fam), "pass": rep is None}
    ic["violation"] = rep.to_json() if rep else None

    lz = log_zeta(params)
    diagnostics = {
        "log_zeta": lz,
        "lemma3_hypothesis": params.lemma3_hypothesis(),
        "welfare_ceiling": fraction_str(welfare_ceiling(params, cfg.setting)),
        "within_ceiling": max(w_mech, default=0) <= welfare_ceiling(params, cfg.setting),
    }
    return ExperimentReport(
        row=row,
        status="budget-exceeded" if truncated else "ok",
        config=base["config"],
        instance={**pair.to_json(), "params": params.to_dict()},
        transformation={"id": runner.t.id, "params": runner.t.params(), "mode": cfg.mode.value},
        welfare_alg=alg,
        welfare_alg_exact=ast_expected_welfare_exact(params, cfg.setting),
        welfare_mech=mech,
        ratio=ratio,
        queries_per_input={
            "min": min(queries),
            "max": max(queries),
            "mean": float(np.mean(queries)),
        },
        truncated_inputs=truncated,
        lemma3=lemma3,
        lemma5=lemma5,
        lemma4=_lemma4(runner, row) if cfg.lemma4_draws else None,
        ic_status=ic,
        diagnostics=diagnostics,
    )


def attack_experiment(config: ExperimentConfig | Mapping[str, Any]) -> Iterator[ExperimentReport]:
    """One report per sampled hidden pair; failures become row statuses, never exceptions."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    try:
        params = params_from_config(cfg.params)
    except ParameterInfeasible as exc:
        for row in range(cfg.pairs):
            yield ExperimentReport(row, "parameter-infeasible", cfg.to_dict(), error=str(exc))
        return
    for row in range(cfg.pairs):
        try:
            yield _attack_row(cfg, params, row)
        except ParameterInfeasible as exc:
            yield ExperimentReport(row, "parameter-infeasible", cfg.to_dict(), error=str(exc))
        except BudgetExceeded as exc:
            yield ExperimentReport(row, "budget-exceeded", cfg.to_dict(), error=str(exc))
