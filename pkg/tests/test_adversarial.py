from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bbmd import reference
from bbmd.adversarial import (
    AstRule,
    Conditioning,
    PairDistribution,
    ValidPair,
    alloc_ast,
    is_feasible,
    sample_valid_pair,
)
from bbmd.core import Allocation, Params, Setting, TypeProfile, mask_to_indices, params_from_config
from bbmd.errors import ParameterInfeasible, StructuralError

from conftest import prof


@pytest.mark.parametrize(
    "support,expected",
    [
        ([4, 5, 6], [4, 5, 6]),
        ([3, 4, 5, 6, 7, 8, 9], []),
        ([3, 4, 5, 6], []),
        ([1, 3, 4, 5], [1, 3, 4, 5]),
    ],
)
def test_alloc_cases(pair16, support, expected):
    assert alloc_ast(prof(support), pair16).to_json() == expected


def test_alloc_multi_uses_support(pair16):
    x = TypeProfile.from_support([1, 3, 4, 5], 16, Setting.MULTI, 6)
    assert alloc_ast(x, pair16).to_json() == [1, 3, 4, 5]


def test_alloc_dimension(pair16):
    with pytest.raises(StructuralError):
        alloc_ast(prof([0], 8), pair16)


def test_valid_pair_validation(n16):
    p = n16.params
    with pytest.raises(ParameterInfeasible):
        ValidPair.from_sets([1, 2, 3], [4, 5, 6], p)
    with pytest.raises(ParameterInfeasible):
        ValidPair.from_sets([1, 2], [2, 4, 5], p)
    assert ValidPair.from_sets([1, 2, 3], [3, 4, 5], p).to_json() == {"S": [1, 2, 3], "T": [3, 4, 5]}


def test_feasible_examples(pair16):
    assert is_feasible(Allocation.empty(16), pair16)
    assert not is_feasible(Allocation.of(range(7), 16), pair16)
    assert is_feasible(Allocation.of([3, 4, 5, 6], 16), pair16)


def test_pair_draws_valid(n16):
    pd = PairDistribution(n16.params, seed=5)
    for i in range(200):
        pr = sample_valid_pair(pd, i)
        assert (pr.S & pr.T).bit_count() == n16.params.eps_ST_N
    assert sample_valid_pair(pd, 3) == sample_valid_pair(pd, 3)


def test_fixed_conditioning(n16):
    p = n16.params
    T = (1 << 3) | (1 << 4) | (1 << 5)
    pd = PairDistribution(p, 1, Conditioning.FIXED_T, T)
    assert all(sample_valid_pair(pd, i).T == T for i in range(300))
    pd = PairDistribution(p, 1, Conditioning.FIXED_S, T)
    assert all(sample_valid_pair(pd, i).S == T for i in range(300))
    with pytest.raises(StructuralError):
        PairDistribution(p, 1, Conditioning.FIXED_S)


def test_no_valid_pair():
    # unvalidated bundle with N > n, so |S | T| = N - eps_ST_N cannot fit
    p = Params(6, Fraction(1, 20), 8, 1, 2, 1, Fraction(8), Fraction(1, 2))
    with pytest.raises(ParameterInfeasible):
        sample_valid_pair(PairDistribution(p), 0)


def test_s_marginals_match_enumeration(n16):
    # enumeration of all valid pairs gives exactly 3/16 per coordinate
    assert reference.s_marginals(16, 6, 1) == [Fraction(3, 16)] * 16
    m = 100_000
    pd = PairDistribution(n16.params, seed=2024)
    counts = np.zeros(16)
    for i in range(m):
        S = sample_valid_pair(pd, i).S
        for j in mask_to_indices(S):
            counts[j] += 1
    se = np.sqrt(3 / 16 * 13 / 16 / m)
    assert np.all(np.abs(counts / m - 3 / 16) < 3 * se)


def test_fixed_t_uniform_over_gamma_t(n16):
    # every S compatible with T={3,4,5} appears, roughly equally often
    p = n16.params
    T = 0b111000
    pd = PairDistribution(p, 9, Conditioning.FIXED_T, T)
    seen = {}
    for i in range(23_400):
        S = sample_valid_pair(pd, i).S
        seen[S] = seen.get(S, 0) + 1
    assert len(seen) == 3 * 78
    assert min(seen.values()) > 50 and max(seen.values()) < 160


masks16 = st.integers(0, 2**16 - 1)


@given(m=masks16)
def test_output_is_support_or_empty(pair16, m):
    y = alloc_ast(prof(m), pair16)
    assert y.mask in (0, m)


@given(m=masks16)
def test_range_is_feasible(pair16, m):
    assert is_feasible(alloc_ast(prof(m), pair16), pair16)


@given(m=masks16, sub=masks16)
def test_downward_closed(pair16, m, sub):
    if is_feasible(Allocation(m, 16), pair16):
        assert is_feasible(Allocation(m & sub, 16), pair16)


def _instances():
    # a small matrix of instances, each checked against the brute-force closure
    specs = [
        ({"n": 8, "N": 4, "eps_ST_N": 1, "eps_T_N": 1}, [0, 1], [1, 2]),
        ({"n": 10, "N": 6, "eps_ST_N": 1, "eps_T_N": 1}, [0, 1, 2], [2, 3, 4]),
        ({"n": 12, "N": 8, "eps_ST_N": 2, "eps_T_N": 2}, [0, 1, 2, 3], [2, 3, 4, 5]),
        ({"n": 12, "N": 6, "eps_ST_N": 1, "eps_T_N": 2}, [0, 4, 8], [8, 9, 10]),
        ({"n": 14, "N": 8, "eps_ST_N": 1, "eps_T_N": 3}, [0, 1, 2, 3], [3, 10, 11, 12]),
    ]
    for cfg, S, T in specs:
        yield ValidPair.from_sets(S, T, params_from_config(cfg))


@pytest.mark.parametrize("inst", list(_instances()), ids=lambda i: f"n{i.n}")
def test_closed_form_matches_brute_force(inst):
    p = inst.params
    S, T = set(mask_to_indices(inst.S)), set(mask_to_indices(inst.T))
    table = reference.ast_truth_table(p.n, S, T, p.N, p.eps_S_N, p.eps_T_N)
    closure = reference.downward_closure(p.n, {sum(1 << i for i in o) for o in table})
    for m in range(1 << p.n):
        assert is_feasible(Allocation(m, p.n), inst) == bool(closure[m]), m


def test_memo_rule_agrees(pair16):
    plain, memo = AstRule(pair16), AstRule(pair16, memo=True)
    for m in range(0, 1 << 16, 97):
        x = prof(m)
        assert plain(x) == memo(x) == memo(x)
