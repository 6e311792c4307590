"""End-to-end acceptance checks at their stated tolerances. Each test
records one PASS/FAIL line, printed in the terminal summary."""
import math
import time

import numpy as np
import pytest

from conftest import record_criterion
from membandit import oracle
from membandit.analysis import lb_config, regret
from membandit.cli import ExperimentConfig, cmd_lab
from membandit.errors import RegimeInvalid
from membandit.instances import BanditInstance, random_instance
from membandit.randomness import replication_seed
from membandit.runtime import commitment_check, run
from membandit.scheduler import (BatchedEliminationPolicy, UCBPolicy, algorithm1_policy,
                                 batch_count, build_schedule, good_event_report, memory_bound_bits)
from membandit.toy import CheatingPolicy

LOG_GRID = sorted({int(round(10 ** (e / 4))) for e in range(12, 29)})


def test_criterion_01_schedule_exactness():
    start = time.perf_counter()
    checked, bad = 0, []
    for K in (2, 5, 10, 50):
        for T in LOG_GRID:
            if T < 40 * K:
                continue
            s = build_schedule(T, K)
            ok = s.lengths[0] == 1
            for i in range(1, s.L + 1):
                num = s.lengths[i - 1] * T
                t = s.lengths[i]
                ok &= t * t * 10 * K >= num > (t - 1) ** 2 * 10 * K
                si = s.smooth_proxy(i)
                ok &= si <= t * (1 + 1e-12) and t <= 2 * si
            ok &= s.H / 4 < s.lengths[s.L] <= s.H
            ok &= T / 40 <= s.n_main <= 3 * T / 5
            checked += 1
            if not ok:
                bad.append((T, K))
    elapsed = time.perf_counter() - start
    passed = not bad and elapsed < 1.0
    record_criterion(1, passed, f"{checked} (T,K) cells, failures={bad}, {elapsed:.3f}s")
    assert passed


@pytest.fixture(scope="module")
def scaling_runs():
    out = {}
    for T in (10**4, 10**5, 10**6):
        pol = algorithm1_policy(10, 3, T)
        rows = []
        for m in range(100):
            seed = replication_seed(7, m)
            inst = random_instance(10, seed)
            tr = run(pol, inst, T, seed)
            rows.append((regret(tr, inst), tr.n_batches, tr.peak_state_bits, pol))
        out[T] = rows
    return out


@pytest.fixture(scope="module")
def grid_runs():
    start = time.perf_counter()
    rows = []
    for T in (10**4, 10**5, 10**6):
        for K in (2, 5, 10, 20):
            for S in sorted(s for s in {1, 2, 3, K - 1, K} if s <= K):
                pol = algorithm1_policy(K, S, T)
                for m in range(3):
                    seed = replication_seed(11, m)
                    tr = run(pol, random_instance(K, seed), T, seed)
                    rows.append((T, K, S, pol.L, tr.n_batches, tr.peak_state_bits))
    return rows, time.perf_counter() - start


def test_criterion_02_batch_count(grid_runs, scaling_runs):
    rows, elapsed = grid_runs
    bad = [r for r in rows if r[4] != batch_count(r[1], r[2], r[3])]
    ref = {b for _, b, _, _ in scaling_runs[10**6]}
    passed = not bad and ref == {22} and elapsed < 60
    record_criterion(2, passed, f"{len(rows)} sweep runs match the formula in {elapsed:.1f}s; "
                                f"K=10,S=3,T=1e6 gives B={sorted(ref)}; mismatches={bad[:3]}")
    assert passed


def test_criterion_03_memory_bound(grid_runs, scaling_runs):
    worst = 0.0
    ok = True
    for T, K, S, _, _, peak in grid_runs[0]:
        bound = memory_bound_bits(S, T)
        ok &= peak <= bound
        worst = max(worst, peak / bound)
    for T, rows in scaling_runs.items():
        for _, _, peak, _ in rows:
            ok &= peak <= memory_bound_bits(3, T)
    record_criterion(3, ok, f"peak bits <= (S+12)*8*ceil(log2(T+1)) on all runs; worst ratio {worst:.3f}")
    assert ok


def test_criterion_04_regret_scaling(scaling_runs):
    Ts = sorted(scaling_runs)
    means = [float(np.mean([r[0] for r in scaling_runs[T]])) for T in Ts]
    slope = float(np.polyfit(np.log(Ts), np.log(means), 1)[0])
    bounds = [20 * math.sqrt(10 * T * math.log(T)) * math.log(math.log(T)) ** 2 for T in Ts]
    under = all(m <= b for m, b in zip(means, bounds))
    passed = 0.40 <= slope <= 0.62 and under
    record_criterion(4, passed, f"slope {slope:.3f} in [0.40, 0.62]; mean regret "
                                f"{[round(m) for m in means]} vs bound {[round(b) for b in bounds]}")
    assert passed


@pytest.fixture(scope="module")
def good_event_runs():
    T, K, M = 10**5, 10, 200
    reports = []
    for m in range(M):
        seed = replication_seed(21, m)
        pol = algorithm1_policy(K, 3, T, delta=float(T) ** -4)
        pol.tracer = []
        inst = random_instance(K, seed)
        run(pol, inst, T, seed)
        reports.append(good_event_report(pol, pol.tracer, inst))
    return T, M, reports


def test_criterion_05_good_event(good_event_runs):
    T, M, reports = good_event_runs
    good = [r for r in reports if r.concentration_holds]
    frac = len(good) / M
    deact = sum(r.best_arm_deactivated for r in good)
    dec = sum(r.incumbent_decreases for r in good)
    gap_bad = sum(not r.final_gap_ok for r in good)
    passed = frac >= 0.99 and deact == 0 and dec == 0 and gap_bad == 0
    record_criterion(5, passed, f"{len(good)}/{M} runs on the good event; best-arm deactivations={deact}, "
                                f"incumbent decreases={dec}, final-gap violations={gap_bad}")
    assert passed


def test_criterion_06_concentration_frequency(good_event_runs):
    T, M, reports = good_event_runs
    p = 1.0 / T ** 2
    allowed = p + 3 * math.sqrt(p * (1 - p) / M)
    frac = sum(not r.concentration_holds for r in reports) / M
    passed = frac <= allowed
    record_criterion(6, passed, f"violation fraction {frac:.4g} <= {allowed:.3g} over M={M}")
    assert passed


@pytest.fixture(scope="module")
def corpus():
    return oracle.generate_corpus(count=105, K=2, T_values=(2, 3, 4, 5, 6, 7, 8), seed=2024)


def test_criterion_07_change_of_measure(corpus):
    start = time.perf_counter()
    base = BanditInstance((0.0, 0.5))
    rows = violations = 0
    max_slack = 0.0
    for pol in corpus:
        cache = {}
        for d in (0.05, 0.1, 0.25):
            rep = oracle.verify_localized_com(pol, base, BanditInstance((0.0, 0.5 + d)), j=1,
                                              tol=1e-12, cache=cache)
            rows += len(rep.rows)
            violations += len(rep.violations)
            max_slack = max(max_slack, rep.max_slack)
    pol = oracle.TinyPolicy.from_function(2, 2, lambda h: 1 if not h or h[0][1] == 1 else 0)
    w = oracle.verify_localized_com(pol, base, BanditInstance((0.0, 0.75)), j=1, n=1,
                                    events=[oracle.budget_event(1, 1)], exact=True)
    r = w.rows[0]
    worked_ok = (abs(r.p0_restricted - 0.5) <= 1e-12 and abs(r.p1_restricted - 0.25) <= 1e-12
                 and abs(w.chi2 - 1 / 3) <= 1e-12 and abs(r.bound_chi - math.sqrt(1 / 3)) <= 1e-12
                 and round(r.bound_chi, 4) == 0.5774)
    elapsed = time.perf_counter() - start
    passed = violations == 0 and worked_ok and elapsed < 300 and len(corpus) >= 100
    record_criterion(7, passed, f"{len(corpus)} policies, {rows} (event, n, gap) checks, {violations} violations, "
                                f"max slack {max_slack:.4f}; worked case P0={r.p0_restricted}, "
                                f"P1={r.p1_restricted}, chi2={w.chi2:.6f}, bound={r.bound_chi:.4f}; {elapsed:.1f}s")
    assert passed


def test_criterion_08_prefix_truncation(corpus):
    checks = failures = 0
    for pol in corpus:
        for j in (0, 1):
            for n in range(pol.T + 1):
                rep = oracle.verify_prefix_truncation(pol, None, j, n)
                checks += 1
                failures += not rep.passed
    passed = failures == 0
    record_criterion(8, passed, f"{checks} (policy, arm, n) truncation checks over every table, {failures} failures")
    assert passed


def test_criterion_09_chi_square_closed_form():
    worst = 0.0
    for d in np.round(np.arange(0.01, 0.2401, 0.01), 2):
        got = oracle.chi_square_bernoulli(0.5, 0.5 + d)
        worst = max(worst, abs(got - 4 * d * d / (1 - 4 * d * d)),
                    abs(got - oracle.chi_square_two_point(0.5, 0.5 + d)))
    passed = worst <= 1e-14
    record_criterion(9, passed, f"max deviation {worst:.2e} over 24 gaps")
    assert passed


def test_criterion_10_information_pipeline(tmp_path):
    cfg = ExperimentConfig(mode="lab", policy="algorithm1", K=8, S=3, T=10**5, n="t1", M=200,
                           seed=3, out=str(tmp_path))
    rep = cmd_lab(cfg)
    info_ok = rep["info_lower_bound"] <= cfg.K
    cap_ok = rep["capacity_bound"] == (rep["B"] - 1) * rep["W"]
    replay_ok = rep["replay_matches"] == rep["replay_runs"] == cfg.M
    try:
        lb_config(10**6, 10, 1.0)
        rejected, d0 = False, None
    except RegimeInvalid as exc:
        d0 = exc.diagnostics["delta0"]
        rejected = d0 > 0.25 and abs(d0 - 0.805) < 5e-4
    passed = info_ok and cap_ok and replay_ok and rejected
    record_criterion(10, passed, f"info bound {rep['info_lower_bound']:.3f} <= K; capacity "
                                 f"{rep['capacity_bound']} = (B-1)W; replay {rep['replay_matches']}/{cfg.M}; "
                                 f"(1e6,10,1) rejected with delta0={d0:.3f}")
    assert passed


def test_criterion_11_commitment():
    results = {}
    inst4 = lambda s: random_instance(4, s)  # noqa: E731
    results["algorithm1"] = sum(commitment_check(algorithm1_policy(4, 2, 10**4), inst4(s), 10**4, s).passed
                                for s in range(20))
    results["ucb"] = sum(commitment_check(UCBPolicy(3, 150), random_instance(3, s), 150, s).passed
                         for s in range(20))
    results["elimination"] = sum(commitment_check(BatchedEliminationPolicy(4, 10**4), inst4(s), 10**4, s).passed
                                 for s in range(20))
    cheat = commitment_check(CheatingPolicy(2, 40, 8), BanditInstance((0.9, 0.9)), 40, 3)
    passed = all(v == 20 for v in results.values()) and not cheat.passed
    record_criterion(11, passed, f"passes out of 20 seeds: {results}; cheater fails at "
                                 f"(batch, round) {cheat.first_divergence}")
    assert passed
