import json
from importlib import resources

import pytest

from bbmd import fixtures
from bbmd.errors import ConfigError


def test_all_fixtures_load():
    fx = fixtures.all_fixtures()
    assert {"n16", "n8", "n10", "n12", "m6", "m8", "n64", "n256", "n1024"} <= set(fx)
    n16 = fx["n16"]
    assert (n16.params.N, n16.params.eps_ST_N, n16.params.eps_S_N, n16.params.eps_T_N) == (6, 1, 2, 2)
    assert n16.pair.to_json() == {"S": [1, 2, 3], "T": [3, 4, 5]}


def test_ladder_order():
    assert [f.params.n for f in fixtures.ladder()] == [16, 64, 256, 1024]


def test_hypothesis_flags_are_stated():
    raw = json.loads(resources.files("bbmd").joinpath("data/fixtures.json").read_text())
    for rec in raw["fixtures"]:
        fx = fixtures.get(rec["name"])
        assert fx.lemma3_hypothesis == rec["lemma3_hypothesis"] == fx.params.lemma3_hypothesis()
    # the density condition only holds from n=256 up on the ladder
    assert [f.lemma3_hypothesis for f in fixtures.ladder()] == [False, False, True, True]


def test_unknown_fixture():
    with pytest.raises(ConfigError):
        fixtures.get("n99")
    with pytest.raises(ConfigError):
        fixtures.get("n64").require_pair()


def test_small_fixtures_are_small():
    assert all(f.params.n <= 12 for f in fixtures.with_role("small"))
