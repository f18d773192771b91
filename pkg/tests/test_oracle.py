import io
import json
import threading

import pytest
from hypothesis import given, strategies as st

from bbmd import reference
from bbmd.adversarial import AstRule
from bbmd.core import Allocation, TypeProfile, mask_to_indices
from bbmd.errors import BudgetExceeded
from bbmd.oracle import OracleSession, observed_range, query

from conftest import prof


def ident(x: TypeProfile) -> Allocation:
    return Allocation(x.support, x.n)


def test_budget_enforced():
    s = OracleSession(ident, budget=3)
    for m in (1, 2, 3):
        s.query(prof(m, 4))
    with pytest.raises(BudgetExceeded):
        s.query(prof(4, 4))
    assert s.queries_used == 3 and s.remaining == 0


def test_repeat_is_free():
    s = OracleSession(ident, budget=1)
    a = s.query(prof(5, 4))
    b = s.query(prof(5, 4))
    assert a == b and s.queries_used == 1


def test_wraps_ast(pair16):
    s = OracleSession(AstRule(pair16))
    assert query(s, prof([4, 5, 6])).to_json() == [4, 5, 6]


def test_observed_range_dedup():
    s = OracleSession(lambda x: Allocation.of([0] if x.values[0] else [1], 2))
    assert observed_range(s) == set()
    s.query(prof([0], 2))
    s.query(prof([0, 1], 2))
    s.query(prof([1], 2))
    assert observed_range(s) == {Allocation.of([0], 2), Allocation.of([1], 2)}


def test_exhaustive_range_matches_enumeration(n16, pair16):
    p = n16.params
    s = OracleSession(AstRule(pair16))
    for m in range(1 << 16):
        s.query(prof(m))
    S, T = set(mask_to_indices(pair16.S)), set(mask_to_indices(pair16.T))
    table = reference.ast_truth_table(16, S, T, p.N, p.eps_S_N, p.eps_T_N)
    assert {y.served for y in observed_range(s)} == set(table)


def test_jsonl_export():
    s = OracleSession(ident)
    s.query(prof([1], 3))
    s.query(prof([0, 2], 3))
    s.query(prof([1], 3))
    buf = io.StringIO()
    s.export_jsonl(buf)
    lines = [json.loads(l) for l in buf.getvalue().splitlines()]
    assert lines == [
        {"query": 1, "profile": {"support": [1]}, "output": [1]},
        {"query": 2, "profile": {"support": [0, 2]}, "output": [0, 2]},
    ]


@given(st.lists(st.integers(0, 63), max_size=40))
def test_deterministic_logs(seq):
    a, b = OracleSession(ident, seed=3), OracleSession(ident, seed=3)
    for m in seq:
        a.query(prof(m, 6))
        b.query(prof(m, 6))
    assert a.query_log == b.query_log
    assert a.queries_used == len(set(seq))


@given(st.lists(st.integers(0, 31), max_size=30), st.integers(0, 10))
def test_budget_never_exceeded(seq, budget):
    s = OracleSession(ident, budget=budget)
    for m in seq:
        try:
            s.query(prof(m, 5))
        except BudgetExceeded:
            pass
        assert s.queries_used <= budget


def test_concurrent_accounting():
    s = OracleSession(ident, budget=200)
    profiles = [prof(m, 8) for m in range(150)]

    def worker():
        for x in profiles:
            s.query(x)

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert s.queries_used == 150
    assert len({x for x, _ in s.query_log}) == 150
