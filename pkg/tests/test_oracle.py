import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from membandit import oracle
from membandit.errors import EnumerationTooLarge, InfiniteDivergence
from membandit.instances import BanditInstance, GoodArmSet


def tree_prob(policy, means, event):
    """Independent path-wise oracle: walk the decision tree, multiplying
    reward masses; no reward tables involved."""
    means = [Fraction(repr(m)) for m in means]
    total = Fraction(0)

    def walk(history, mass):
        nonlocal total
        if mass == 0:
            return
        if len(history) == policy.T:
            tr = oracle.TinyTranscript(tuple(a for a, _ in history), tuple(r for _, r in history))
            if event(tr):
                total += mass
            return
        a = policy.action(history)
        walk(history + ((a, 1),), mass * means[a])
        walk(history + ((a, 0),), mass * (1 - means[a]))

    walk((), Fraction(1))
    return total


def worked():
    return oracle.TinyPolicy.from_function(2, 2, lambda h: 1 if not h or h[0][1] == 1 else 0)


def test_worked_event_probability():
    p = oracle.exact_event_prob(worked(), BanditInstance((0.0, 0.5)), oracle.budget_event(1, 1), exact=True)
    assert p == Fraction(1, 2)


def test_trivial_events():
    pol = oracle.constant_policy(2, 3, 0)
    inst = BanditInstance((0.5, 0.0))
    assert oracle.exact_event_prob(pol, inst, oracle.ALWAYS) == 1.0
    full = oracle.Event("N_1=T", lambda tr: tr.count(0) == 3)
    assert oracle.exact_event_prob(pol, inst, full, exact=True) == 1


def test_enumeration_too_large():
    with pytest.raises(EnumerationTooLarge):
        oracle.exact_event_prob(oracle.constant_policy(5, 5, 0), BanditInstance((0.5,) * 5), oracle.ALWAYS)


@settings(max_examples=30)
@given(st.integers(0, 2**32), st.integers(1, 5), st.lists(st.sampled_from([0.0, 0.25, 0.5, 0.6, 1.0]),
                                                           min_size=2, max_size=2),
       st.integers(0, 5))
def test_masses_match_tree_oracle(seed, T, means, m):
    pol = oracle.TinyPolicy.random(2, T, seed)
    inst = BanditInstance(tuple(means))
    ev = oracle.budget_event(1, m)
    assert oracle.exact_event_prob(pol, inst, ev, exact=True) == tree_prob(pol, means, ev)
    assert oracle.exact_event_prob(pol, inst, ev) == pytest.approx(float(tree_prob(pol, means, ev)), abs=1e-12)
    assert oracle.exact_event_prob(pol, inst, oracle.ALWAYS, exact=True) == 1


def test_k3_enumeration_total_mass():
    pol = oracle.TinyPolicy.random(3, 4, 5)
    law = oracle.ExactLaw(pol, BanditInstance((0.3, 0.55, 0.9)))
    assert law.total_mass() == pytest.approx(1.0, abs=1e-12)


def test_mixture_weights():
    a, b = oracle.constant_policy(2, 3, 0), oracle.constant_policy(2, 3, 1)
    mix = oracle.MixturePolicy((a, b), (0.25, 0.75))
    inst = BanditInstance((0.5, 0.5))
    assert oracle.exact_event_prob(mix, inst, oracle.first_action_event(1)) == pytest.approx(0.75)


def test_chi_square_examples():
    assert oracle.chi_square_bernoulli(0.3, 0.3) == 0
    assert oracle.chi_square_bernoulli(0.5, 0.75) == pytest.approx(1 / 3, abs=1e-15)
    assert oracle.chi_square_bernoulli(0.5, 0.6) == pytest.approx(0.04 / 0.96, abs=1e-15)
    with pytest.raises(InfiniteDivergence):
        oracle.chi_square_bernoulli(0.5, 0.0)


def test_kl_examples():
    assert oracle.kl_bernoulli(0.4, 0.4) == 0
    assert oracle.kl_bernoulli(0.0, 0.5) == pytest.approx(math.log(2))
    assert oracle.kl_bernoulli(0.5, 0.75) == pytest.approx(0.143841036225890, abs=1e-14)
    with pytest.raises(InfiniteDivergence):
        oracle.kl_bernoulli(0.5, 1.0)


@given(st.floats(0.0, 0.2499))
def test_chi_square_closed_form(d):
    got = oracle.chi_square_bernoulli(0.5, 0.5 + d)
    assert got == pytest.approx(4 * d * d / (1 - 4 * d * d), abs=1e-14)
    assert got == pytest.approx(oracle.chi_square_two_point(0.5, 0.5 + d), abs=1e-14)


def test_worked_com_case():
    rep = oracle.verify_localized_com(worked(), BanditInstance((0.0, 0.5)), BanditInstance((0.0, 0.75)),
                                      j=1, n=1, events=[oracle.budget_event(1, 1)], exact=True)
    row = rep.rows[0]
    assert row.p0_restricted == 0.5 and row.p1_restricted == 0.25
    assert rep.chi2 == pytest.approx(1 / 3, abs=1e-15)
    assert row.bound_chi == pytest.approx(math.sqrt(0.25 * 4 / 3), abs=1e-12)
    assert round(row.bound_chi, 4) == 0.5774
    assert row.ok and row.inside_budget


def test_vacuous_case():
    pol = oracle.constant_policy(2, 3, 1)
    ev = oracle.Event("N_2=0", lambda tr: tr.count(1) == 0)
    rep = oracle.verify_localized_com(pol, BanditInstance((0.0, 0.5)), BanditInstance((0.0, 0.6)),
                                      j=1, n=0, events=[ev])
    assert rep.rows[0].p0_restricted == 0 and not rep.violations


@settings(max_examples=15)
@given(st.integers(0, 2**32), st.integers(2, 6), st.sampled_from([0.05, 0.1, 0.25]))
def test_com_float_matches_exact(seed, T, d):
    pol = oracle.TinyPolicy.random(2, T, seed)
    base, pert = BanditInstance((0.0, 0.5)), BanditInstance((0.0, 0.5 + d))
    f = oracle.verify_localized_com(pol, base, pert, j=1)
    e = oracle.verify_localized_com(pol, base, pert, j=1, exact=True)
    assert not f.violations and not e.violations
    for a, b in zip(f.rows, e.rows):
        assert a.p0_restricted == pytest.approx(b.p0_restricted, abs=1e-14)
        assert a.slack <= 1 + 1e-12


def test_com_rejects_multi_arm_difference():
    with pytest.raises(ValueError):
        oracle.verify_localized_com(worked(), BanditInstance((0.1, 0.5)), BanditInstance((0.2, 0.6)))


def test_kl_comparison_reported():
    rep = oracle.verify_localized_com(worked(), BanditInstance((0.0, 0.5)), BanditInstance((0.0, 0.75)), j=1)
    assert [r["n"] for r in rep.kl_rows] == [0, 1, 2]
    assert rep.kl_rows[0]["budget_chi2"] == 0


def test_truncation_examples():
    inst = BanditInstance((0.0, 0.5))
    rep = oracle.verify_prefix_truncation(worked(), inst, 1, 1)
    assert rep.passed and rep.tables == 16
    for n in range(4):
        assert oracle.verify_prefix_truncation(oracle.constant_policy(2, 3, 0), inst, 1, n).passed
    assert oracle.verify_prefix_truncation(oracle.TinyPolicy.random(2, 5, 1), inst, 1, 5).passed


@settings(max_examples=20)
@given(st.integers(0, 2**32), st.integers(1, 6), st.integers(0, 6))
def test_truncation_random(seed, T, n):
    assert oracle.verify_prefix_truncation(oracle.TinyPolicy.random(2, T, seed), None, 1, n).passed


def test_template_degenerate_policies():
    gs = GoodArmSet(2, frozenset({1}))
    rep = oracle.verify_per_good_arm_template(oracle.constant_policy(2, 4, 1), gs, 1, 1.0, 4, 2, 0.25, 2)
    assert rep.p0 == rep.p1 == 0 and rep.ok
    rep = oracle.verify_per_good_arm_template(oracle.constant_policy(2, 4, 0), gs, 1, 1.0, 4, 2, 0.25, 2)
    assert rep.p0 == rep.p1 == 1 and rep.ok


def test_template_greedy():
    gs = GoodArmSet(2, frozenset({1}))
    pol = oracle.greedy_policy(2, 4)
    rep = oracle.verify_per_good_arm_template(pol, gs, 1, 1.0, 4, 2, 0.25, 2)
    ev = oracle.under_sampling_event(1, 2)
    assert rep.p0 == pytest.approx(float(tree_prob(pol, (0.0, 0.5), ev)), abs=1e-15)
    assert rep.p1 == pytest.approx(float(tree_prob(pol, (0.0, 0.75), ev)), abs=1e-15)
    assert (rep.p0, rep.p1) == (0.5, 0.25)
    assert rep.ok and rep.p0 <= rep.bound
    assert rep.regret_witness == pytest.approx(0.25 * 2 * rep.p1)


def test_corpus_reproducible():
    rec = oracle.corpus_record(count=12, seed=3)
    a, b = oracle.generate_corpus(12, seed=3), oracle.corpus_from_record(rec)
    assert [p.name for p in a] == [p.name for p in b]
    assert any(isinstance(p, oracle.MixturePolicy) for p in a)
