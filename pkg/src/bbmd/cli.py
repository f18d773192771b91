"""Command-line entry point: verify, welfare, attack, reproduce, params.

Exit codes: 0 when every check passed, 1 when a violation was found,
2 on a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from fractions import Fraction
from typing import Any, Iterable

from . import fixtures
from .adversarial import AstRule, ValidPair
from .analysis import (
    ExperimentConfig,
    attack_experiment,
    expected_welfare_exact,
    expected_welfare_mc,
)
from .core import (
    DEFAULT_EPSILON,
    PriorDistribution,
    Setting,
    derive_params,
    enumerate_profiles,
    params_from_config,
)
from .errors import BBMDError, ConfigError, DomainTooLarge, ParameterInfeasible, StructuralError
from .icverify import (
    check_bic_matching,
    check_midr,
    random_subsets,
    subsets_up_to,
    targeted_subsets,
)
from .oracle import OracleSession
from .reproduce import ReproduceConfig, run_suite
from .transformations import (
    CATALOG,
    FeasibilityMode,
    TransformationContext,
    as_rule,
    make_transformation,
)

log = logging.getLogger("bbmd")

OK, VIOLATION, CONFIG_ERROR = 0, 1, 2


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _merge(cfg: dict, args: argparse.Namespace, keys: Iterable[str]) -> dict:
    """Command-line flags override config-file keys."""
    out = dict(cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _emit(records: list[dict], args: argparse.Namespace) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            for r in records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
    else:
        for r in records:
            print(json.dumps(r, sort_keys=True))


def _write_csv(path: str, rows: list[dict]) -> None:
    if not rows:
        return
    fields = list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


def _instance(cfg: dict) -> tuple[PriorDistribution, ValidPair]:
    """A prior and hidden pair from either a named fixture or explicit params + S + T."""
    seed = int(cfg.get("seed", 0))
    if "fixture" in cfg:
        fx = fixtures.get(cfg["fixture"])
        return fx.prior(seed), fx.require_pair()
    if "params" not in cfg or "S" not in cfg or "T" not in cfg:
        raise ConfigError("give 'fixture', or 'params' with 'S' and 'T'")
    params = params_from_config(cfg["params"])
    setting = Setting.parse(cfg.get("setting", "single"))
    return PriorDistribution(params, setting, seed), ValidPair.from_sets(cfg["S"], cfg["T"], params)


def _rule(cfg: dict, prior: PriorDistribution, pair: ValidPair, seed: int | None = None):
    name = cfg.get("rule", "ast")
    base = AstRule(pair, memo=True)
    if name == "ast":
        return base
    if name not in CATALOG:
        raise ConfigError(f"unknown rule {name!r}; use 'ast' or one of {sorted(CATALOG)}")
    sess = OracleSession(base, cfg.get("budget"))
    s = int(cfg.get("seed", 0)) if seed is None else seed
    mode = FeasibilityMode.parse(cfg.get("mode", "range-only"))
    t = make_transformation(name, q=int(cfg.get("q", 64)))
    return as_rule(t, TransformationContext(sess, prior, mode, s))


def cmd_params(args: argparse.Namespace) -> int:
    cfg = _merge(_load_config(args.config), args, ("n", "epsilon"))
    if "n" not in cfg:
        raise ConfigError("params needs --n or a config with 'n'")
    explicit = {"N", "eps_ST_N", "eps_S_N", "eps_T_N", "alpha", "bernoulli_q"} & set(cfg)
    p = params_from_config(cfg) if explicit else derive_params(int(cfg["n"]), Fraction(str(cfg.get("epsilon", DEFAULT_EPSILON))))
    rec = {**p.to_dict(), "lemma3_hypothesis": p.lemma3_hypothesis()}
    _emit([rec], args)
    if args.csv:
        _write_csv(args.csv, [rec])
    return OK


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = _merge(_load_config(args.config), args, ("fixture", "rule", "check", "seed", "budget", "mode", "q", "k", "max_size", "seeds", "samples"))
    prior, pair = _instance(cfg)
    check = cfg.get("check", "midr")
    seeds = int(cfg.get("seeds", 1))
    seed0 = int(cfg.get("seed", 0))
    if seeds > 1:
        rule: Any = lambda s: _rule(cfg, prior, pair, s)
        seed_list: list[int] | None = list(range(seed0, seed0 + seeds))
    else:
        rule, seed_list = _rule(cfg, prior, pair), None
    p = prior.params
    max_size = cfg.get("max_size")
    if check == "midr":
        domain = list(enumerate_profiles(p.n, prior.setting, p.alpha, max_size))
        rep = check_midr(rule, domain, seed_list, focus=[pair.t_profile(prior.setting)])
        rec = {"check": "midr", "domain": len(domain)}
    elif check in ("matching", "matching-random", "matching-targeted"):
        if check == "matching":
            domain = list(enumerate_profiles(p.n, prior.setting, p.alpha, max_size))
            fam = list(subsets_up_to(domain, int(cfg.get("k", 3))))
        elif check == "matching-random":
            fam = list(random_subsets(prior, int(cfg.get("samples", 200)), int(cfg.get("k", 3)), seed0))
        else:
            xs = list(enumerate_profiles(p.n, prior.setting, p.alpha, max_size))
            fam = list(targeted_subsets(xs, pair, p.alpha if prior.setting is Setting.MULTI else 1, prior.setting))
        rep = check_bic_matching(rule, fam, seed_list)
        rec = {"check": check, "subsets": len(fam)}
    else:
        raise ConfigError(f"unknown check {check!r}")
    rec.update(rule=cfg.get("rule", "ast"), seeds=seeds, violation=rep.to_json() if rep else None)
    rec["pass"] = rep is None
    _emit([rec], args)
    if args.csv:
        _write_csv(args.csv, [{k: v for k, v in rec.items() if k != "violation"}])
    return OK if rep is None else VIOLATION


def cmd_welfare(args: argparse.Namespace) -> int:
    cfg = _merge(_load_config(args.config), args, ("fixture", "rule", "method", "samples", "seed", "budget", "mode", "q"))
    prior, pair = _instance(cfg)
    rule = _rule(cfg, prior, pair)
    method = cfg.get("method", "exact")
    if method == "exact":
        try:
            est = expected_welfare_exact(rule, prior)
        except DomainTooLarge as exc:
            raise ConfigError(str(exc)) from None
    elif method in ("mc", "monte-carlo"):
        est = expected_welfare_mc(rule, prior, int(cfg.get("samples", 1000)), int(cfg.get("seed", 0)))
    else:
        raise ConfigError(f"unknown method {method!r}")
    rec = {"rule": cfg.get("rule", "ast"), **est.to_json()}
    _emit([rec], args)
    if args.csv:
        _write_csv(args.csv, [rec])
    return OK


def _experiment_dict(cfg: dict) -> dict:
    cfg = dict(cfg)
    if "fixture" in cfg:
        fx = fixtures.get(cfg.pop("fixture"))
        cfg.setdefault("params", fx.params.to_dict())
        cfg.setdefault("setting", fx.setting.value)
        cfg.setdefault("name", fx.name)
    return cfg


def _summary_row(r: dict) -> dict:
    out = {"row": r["row"], "status": r["status"]}
    if "welfare_mech" in r:
        out.update(
            n=r["instance"]["params"]["n"],
            transformation=r["transformation"]["id"],
            welfare_alg=r["welfare_alg"]["mean"],
            welfare_mech=r["welfare_mech"]["mean"],
            ratio=r["ratio"],
            queries_max=r["queries_per_input"]["max"],
            lemma3_event=r["lemma3"]["event"],
            ic_pass=r["ic_status"]["pass"],
        )
    return out


def cmd_attack(args: argparse.Namespace) -> int:
    cfg = _merge(_load_config(args.config), args, ("fixture", "transformation", "q", "seed", "samples", "budget", "mode", "pairs"))
    ec = ExperimentConfig.from_dict(_experiment_dict(cfg))
    rows = [r.to_json() for r in attack_experiment(ec)]
    _emit(rows, args)
    if args.csv:
        _write_csv(args.csv, [_summary_row(r) for r in rows])
    bad = any(r.get("ic_status") and not r["ic_status"]["pass"] for r in rows)
    return VIOLATION if bad else OK


def cmd_reproduce(args: argparse.Namespace) -> int:
    cfg = _merge(_load_config(args.config), args, ("seed",))
    if args.samples is not None:
        cfg["ladder_samples"] = args.samples
    if args.mode is not None:
        cfg["ladder_mode"] = args.mode
    rc = ReproduceConfig.from_dict(cfg)
    records = []
    for rec in run_suite(rc):
        records.append(rec)
        if "check" in rec and "pass" in rec:
            log.info("criterion %s %-40s %s", rec["criterion"], rec["check"], "PASS" if rec["pass"] else "FAIL")
    _emit(records, args)
    if args.csv:
        _write_csv(args.csv, [{k: v for k, v in r.items() if not isinstance(v, (dict, list))} for r in records if "check" in r and "pass" in r])
    return OK if records[-1]["pass"] else VIOLATION


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its keys")
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--budget", type=int)
    common.add_argument("--mode", choices=[m.value for m in FeasibilityMode])
    common.add_argument("--out", help="write JSON-lines here instead of stdout")
    common.add_argument("--csv", help="also write a CSV summary")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bbmd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("params", parents=[common], help="derive integer parameters for n and epsilon")
    p.add_argument("--n", type=int)
    p.add_argument("--epsilon")
    p.set_defaults(func=cmd_params)

    v = sub.add_parser("verify", parents=[common], help="run an incentive check on a rule over a fixture")
    v.add_argument("--fixture")
    v.add_argument("--rule", help="'ast' or a transformation id")
    v.add_argument("--check", choices=["midr", "matching", "matching-random", "matching-targeted"])
    v.add_argument("--q", type=int)
    v.add_argument("--k", type=int)
    v.add_argument("--max-size", dest="max_size", type=int)
    v.add_argument("--seeds", type=int, help="number of seeds to sweep for randomized rules")
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("welfare", parents=[common], help="exact or Monte Carlo expected welfare")
    w.add_argument("--fixture")
    w.add_argument("--rule")
    w.add_argument("--method", choices=["exact", "mc"])
    w.add_argument("--q", type=int)
    w.set_defaults(func=cmd_welfare)

    a = sub.add_parser("attack", parents=[common], help="run the adversarial attack experiment")
    a.add_argument("--fixture")
    a.add_argument("--transformation")
    a.add_argument("--q", type=int)
    a.add_argument("--pairs", type=int)
    a.set_defaults(func=cmd_attack)

    r = sub.add_parser("reproduce", parents=[common], help="run the full acceptance suite")
    r.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, ParameterInfeasible, StructuralError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except BBMDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
