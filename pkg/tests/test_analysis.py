import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from membandit import analysis
from membandit.errors import DomainError, RegimeInvalid
from membandit.instances import BanditInstance, GoodArmSet, make_hard_instance, sample_good_set
from membandit.runtime import run
from membandit.scheduler import ConstantPolicy, algorithm1_policy, build_schedule
from membandit.toy import RoundRobinPolicy


def test_regret_examples():
    inst = BanditInstance((0.5, 0.0))
    assert analysis.regret(np.array([90, 10]), inst) == 5.0
    assert analysis.regret(np.array([100, 0]), inst) == 0.0
    with pytest.raises(ValueError):
        analysis.regret(np.array([1, 2, 3]), inst)


def test_constant_policy_regret():
    inst = BanditInstance((0.2, 0.7, 0.4))
    tr = run(ConstantPolicy(3, 1000, 0), inst, 1000, 0)
    assert analysis.regret(tr, inst) == pytest.approx(1000 * (0.7 - 0.2))


@given(st.integers(1, 5), st.integers(0, 2**32), st.integers(1, 40))
def test_hard_regret_identity(half, seed, blen):
    K = 2 * half
    gs = sample_good_set(K, seed)
    T = 200
    tr = run(RoundRobinPolicy(K, T, blen), make_hard_instance(gs), T, seed)
    assert analysis.regret(tr, make_hard_instance(gs)) == analysis.hard_family_regret(tr, gs)


def test_profile_examples():
    assert analysis.profile(np.array([5, 0, 3]), 3).bits == (1, 0, 1)
    assert analysis.profile(np.array([5, 0, 3]), 1).bits == (1, 0, 1)
    assert analysis.profile(np.array([5, 0, 3]), 9).bits == (0, 0, 0)


def test_error_count_examples():
    gs = GoodArmSet.from_external((1, 2), 4)
    e = analysis.error_counts(analysis.Profile(1, (1, 0, 1, 0)), gs)
    assert (e.fp, e.fn, e.p_e) == (1, 1, 0.5)
    e = analysis.error_counts(analysis.Profile(1, tuple(gs.indicator())), gs)
    assert e.p_e == 0
    e = analysis.error_counts(analysis.Profile(1, tuple(1 - gs.indicator())), gs)
    assert e.p_e == 1


def test_binary_entropy_values():
    assert analysis.binary_entropy(0.5) == 1.0
    assert analysis.binary_entropy(0.0) == 0.0
    assert analysis.binary_entropy(0.475) == pytest.approx(0.998195879042810, abs=1e-12)
    with pytest.raises(DomainError):
        analysis.binary_entropy(1.5)


@given(st.floats(0.0, 1.0))
def test_binary_entropy_symmetric(p):
    assert analysis.binary_entropy(p) == pytest.approx(analysis.binary_entropy(1 - p), abs=1e-12)


def test_binary_entropy_shape():
    grid = np.linspace(0, 0.5, 201)
    h = np.array([analysis.binary_entropy(p) for p in grid])
    assert np.all(np.diff(h) > 0)
    g = np.linspace(0, 1, 101)
    for a, b in zip(g[:-2], g[2:]):
        mid = analysis.binary_entropy((a + b) / 2)
        assert mid >= (analysis.binary_entropy(a) + analysis.binary_entropy(b)) / 2 - 1e-12


def test_info_lower_bound():
    assert analysis.info_lower_bound(4, 0) == pytest.approx(2.5)
    assert math.log2(math.comb(4, 2)) >= 2.5
    assert analysis.info_lower_bound(6, 0.5) == pytest.approx(-0.5 * math.log2(12))
    assert analysis.gamma0() == pytest.approx(0.00180412095718991, abs=1e-12)


@pytest.mark.parametrize("K", range(2, 31, 2))
def test_info_bound_below_prior_entropy(K):
    assert analysis.info_lower_bound(K, 0) <= analysis.prior_entropy(K)


@given(st.integers(1, 60), st.floats(0, 1))
def test_info_bound_at_most_k(K, p):
    assert analysis.info_lower_bound(K, p) <= K


def test_capacity():
    assert analysis.capacity_bound(1, 2400) == 0
    assert analysis.capacity_bound(22, 2400) == 50400
    assert analysis.implied_min_batches(50400, 2400) == 22


def test_lb_config_constants_and_rejection():
    assert analysis.C_DELTA == 8 and analysis.BETA == 0.1
    assert analysis.ALPHA == pytest.approx(0.0011480208, abs=1e-10)
    with pytest.raises(RegimeInvalid) as info:
        analysis.lb_config(10**6, 10, 1.0)
    d = info.value.diagnostics
    assert d["delta0"] == pytest.approx(0.80477154966, abs=1e-10)
    assert d["n"] == 0 and not d["delta0_le_quarter"] and not d["n_ge_1"]


@given(st.integers(10, 10**30), st.integers(2, 40), st.floats(0.1, 3))
def test_valid_regime_budget_identity(T, K, C):
    cfg = analysis.lb_config(T, K, C, strict=False)
    if cfg.regime_valid:
        assert 8 * cfg.n * cfg.delta0 ** 2 <= math.log(1.8) * (1 + 1e-12)


def test_exploration_rates():
    inst = BanditInstance((0.5, 0.0))
    runs = [run(ConstantPolicy(2, 50, 0), inst, 50, s) for s in range(20)]
    assert analysis.exploration_rate(runs, 0, 10).rate == 1.0
    est = analysis.exploration_rate(runs, 1, 1)
    assert est.rate == 0.0 and est.low == 0.0 and 0 < est.high < 0.2
    with pytest.raises(ValueError):
        analysis.exploration_rate([], 0, 1)


def test_exploration_rate_algorithm1_k4():
    T = 4000
    pol = algorithm1_policy(4, 2, T)
    n = build_schedule(T, 4).lengths[1]
    runs = []
    for s in range(500):
        gs = sample_good_set(4, s)
        if 0 in gs.members:
            runs.append(run(pol, make_hard_instance(gs), T, s))
    est = analysis.exploration_rate(runs, 0, n)
    assert est.low <= est.rate <= est.high


def test_boundary_entropy():
    inst = BanditInstance((0.3, 0.6))
    pol = algorithm1_policy(2, 1, 500)
    same = [run(pol, inst, 500, 1) for _ in range(5)]
    assert analysis.boundary_entropy_estimate(same) == 0.0

    class Fake:
        def __init__(self, v):
            from membandit.bits import BitString
            self.boundary_states = (BitString(v, 4),)

    assert analysis.boundary_entropy_estimate([Fake(1), Fake(2)]) == pytest.approx(1.0)
    runs = [run(pol, inst, 500, s) for s in range(50)]
    B = runs[0].n_batches
    assert analysis.boundary_entropy_estimate(runs) <= analysis.capacity_bound(B, pol.budget_bits)


def test_fp_regret_link():
    K, T = 6, 20000
    pol = algorithm1_policy(K, 2, T)
    n = build_schedule(T, K).lengths[2]
    for s in range(10):
        gs = sample_good_set(K, s)
        tr = run(pol, make_hard_instance(gs), T, s)
        e = analysis.error_counts(analysis.profile(tr, n), gs)
        assert e.fp <= analysis.hard_family_regret(tr, gs) / (n / 2)
