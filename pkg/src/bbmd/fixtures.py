"""Hand-picked integer instances used by tests, the CLI and the reproduce suite.

Each record states whether eps_ST > 2N/n holds; loading fails if the flag
disagrees with the parameters.
"""

from __future__ import annotations

import dataclasses
import json
from functools import lru_cache
from importlib import resources

from .adversarial import ValidPair
from .core import Params, PriorDistribution, Setting, params_from_config
from .errors import ConfigError


@dataclasses.dataclass(frozen=True)
class Fixture:
    name: str
    params: Params
    setting: Setting
    pair: ValidPair | None
    lemma3_hypothesis: bool
    roles: tuple[str, ...]

    def prior(self, seed: int = 0) -> PriorDistribution:
        return PriorDistribution(self.params, self.setting, seed)

    def require_pair(self) -> ValidPair:
        if self.pair is None:
            raise ConfigError(f"fixture {self.name} has no fixed pair")
        return self.pair


def _parse(rec: dict) -> Fixture:
    params = params_from_config(rec["params"])
    pair = None
    if rec.get("S") is not None:
        pair = ValidPair.from_sets(rec["S"], rec["T"], params)
    flag = bool(rec["lemma3_hypothesis"])
    if flag != params.lemma3_hypothesis():
        raise ConfigError(f"fixture {rec['name']}: lemma3_hypothesis flag is wrong")
    return Fixture(rec["name"], params, Setting.parse(rec["setting"]), pair, flag, tuple(rec["role"]))


@lru_cache(maxsize=1)
def _load() -> tuple[dict[str, Fixture], tuple[str, ...]]:
    raw = json.loads(resources.files("bbmd").joinpath("data/fixtures.json").read_text())
    fixtures = {rec["name"]: _parse(rec) for rec in raw["fixtures"]}
    return fixtures, tuple(raw["ladder"])


def all_fixtures() -> dict[str, Fixture]:
    return dict(_load()[0])


def get(name: str) -> Fixture:
    fixtures = _load()[0]
    if name not in fixtures:
        raise ConfigError(f"unknown fixture {name!r}; known: {sorted(fixtures)}")
    return fixtures[name]


def ladder() -> tuple[Fixture, ...]:
    return tuple(get(n) for n in _load()[1])


def with_role(role: str) -> list[Fixture]:
    return [f for f in _load()[0].values() if role in f.roles]
