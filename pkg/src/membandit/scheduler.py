"""Block-scanning incumbent/challenger policy and its deterministic schedule.

The policy keeps one incumbent plus one block of at most ``S`` challengers.
Each outer iteration ``i`` refreshes the incumbent for ``t_i`` rounds, then
scans the remaining arms block by block; every block runs ``i`` comparison
slots of ``t_1, ..., t_i`` pulls per arm position against a frozen benchmark.
All slot totals are fixed in advance, so the grid is static. Also holds the
comparison baselines (UCB, batched elimination, constant arm).
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bits import BitReader, BitWriter, int_width
from .errors import BlockSizeInvalid, DomainError, HorizonTooSmall, RegimeWarning
from .runtime import BatchPlan, Policy

REFRESH, SLOT, FINAL = 0, 1, 2


def _ceil_sqrt(n):
    return 0 if n <= 0 else math.isqrt(n - 1) + 1


@dataclass(frozen=True)
class Schedule:
    T: int
    K: int
    L: int
    lengths: tuple  # (t_0, t_1, ..., t_L)
    n_main: int

    @property
    def H(self):
        return self.T / (10 * self.K)

    @property
    def final_length(self):
        return self.T - self.n_main

    def smooth_proxy(self, i):
        """``s_i = H^(1 - 2^-i)``, the real-valued companion of ``t_i``."""
        return self.H ** (1.0 - 2.0 ** -i)


def outer_levels(T, K):
    """Largest L with ``2^(2^L) <= T/(10K)`` i.e. ``floor(log2 log2 (T/10K))``.

    Returns -1 when ``T/(10K) < 2``.
    """
    L = -1
    while T >= 10 * K * (1 << (1 << (L + 1))):
        L += 1
    return L


def build_schedule(T, K):
    """Exact integer schedule ``t_i = ceil(sqrt(t_{i-1} T / (10K)))``."""
    if K < 1 or T < 40 * K:
        raise HorizonTooSmall(f"need T >= 40K = {40 * K}, got T={T}")
    L = outer_levels(T, K)
    t = [1]
    for _ in range(L):
        # ceil(sqrt(x)) for rational x equals ceil_sqrt(ceil(x))
        t.append(_ceil_sqrt(-(-t[-1] * T // (10 * K))))
    n_main = sum(t[i] + (K - 1) * sum(t[1:i + 1]) for i in range(1, L + 1))
    return Schedule(T, K, L, tuple(t), n_main)


def batch_count(K, S, L):
    """``L + ceil((K-1)/S) * L(L+1)/2 + 1``."""
    J = -(-(K - 1) // S)
    return L + J * L * (L + 1) // 2 + 1


def memory_bound_bits(S, T):
    """Audited persistent-memory bound ``(S + 12) * 8 * ceil(log2(T + 1))``."""
    return (S + 12) * 8 * int_width(T)


@dataclass(frozen=True)
class ConfidenceParams:
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("delta must be positive")

    @classmethod
    def for_horizon(cls, T):
        return cls(float(T) ** -4)

    @property
    def log_term(self):
        return math.log(2.0 / self.delta)

    def radius(self, s):
        return confidence_radius(self, s)


def confidence_radius(params, s):
    """Hoeffding radius ``sqrt(log(2/delta) / (2s))`` (natural log)."""
    if s < 1:
        raise DomainError(f"radius needs s >= 1, got {s}")
    return math.sqrt(max(params.log_term, 0.0) / (2.0 * s))


@dataclass
class AlgoState:
    phase: int = REFRESH
    i: int = 1
    j: int = 0
    k: int = 0
    a_init: int = 0
    a_star: int = 0
    star_sum: int = 0
    star_cnt: int = 0
    init_sum: int = 0
    init_cnt: int = 0
    bench_arm: int = 0
    bench_sum: int = 0
    bench_cnt: int = 0
    block: list = field(default_factory=list)
    active: list = field(default_factory=list)
    sums: list = field(default_factory=list)
    cnts: list = field(default_factory=list)


def _mean(total, count):
    return total / count if count else 0.0


class BlockScanPolicy(Policy):
    """The incumbent/challenger block scan with block size ``S``.

    Arms of ``[K] minus {a_init}`` are partitioned in ascending index order;
    ties in the end-of-block argmax go to the lowest index. Means are kept as
    exact (reward sum, count) pairs.
    """

    def __init__(self, K, S, T, delta=None):
        if not 1 <= S <= K:
            raise BlockSizeInvalid(f"block size must satisfy 1 <= S <= K={K}, got S={S}")
        self.arm_count = K
        self.horizon = T
        self.S = S
        self.schedule = build_schedule(T, K)
        self.conf = ConfidenceParams(float(T) ** -4 if delta is None else delta)
        self.J = -(-(K - 1) // S)
        self.budget_bits = memory_bound_bits(S, T)
        self.tracer = None
        self._w = int_width(T)
        self._aw = int_width(K - 1)
        self._bw = int_width(K)
        self._radius = [0.0] + [confidence_radius(self.conf, t) for t in self.schedule.lengths[1:]]

    @property
    def L(self):
        return self.schedule.L

    def radius(self, level):
        return self._radius[level]

    def block_arms(self, a_init, j):
        rest = [a for a in range(self.arm_count) if a != a_init]
        return rest[(j - 1) * self.S: j * self.S]

    def static_grid(self, seed=None):
        t = self.schedule.lengths
        ends, now = [], 0
        sizes = [len(self.block_arms(0, j)) for j in range(1, self.J + 1)]
        for i in range(1, self.L + 1):
            now += t[i]
            ends.append(now)
            for size in sizes:
                for k in range(1, i + 1):
                    now += size * t[k]
                    ends.append(now)
        ends.append(self.horizon)
        return tuple(ends)

    def initial_state(self):
        return AlgoState() if self.L >= 1 else AlgoState(phase=FINAL)

    def plan_batch(self, t_prev, s, seed):
        t = self.schedule.lengths
        if s.phase == REFRESH:
            return BatchPlan(t_prev + t[s.i], ((s.a_init, t[s.i]),))
        if s.phase == SLOT:
            tk = t[s.k]
            segs = [(a, tk) for a, on in zip(s.block, s.active) if on]
            idle = len(s.block) - len(segs)
            if idle:
                segs.append((s.bench_arm, idle * tk))
            return BatchPlan(t_prev + len(s.block) * tk, tuple(segs))
        return BatchPlan(self.horizon, ((s.a_star, self.horizon - t_prev),))

    def observe(self, s, arm, reward):
        return self.observe_segment(s, arm, (reward,))

    def observe_segment(self, s, arm, rewards):
        n = len(rewards)
        total = int(np.sum(rewards)) if n else 0
        if s.phase == REFRESH:
            s.init_sum += total
            s.init_cnt += n
        elif s.phase == SLOT:
            for p, a in enumerate(s.block):
                if a == arm and s.active[p]:
                    s.sums[p] += total
                    s.cnts[p] += n
                    break
        return s

    def _start_block(self, s):
        s.phase = SLOT
        s.k = 1
        s.block = self.block_arms(s.a_init, s.j)
        s.active = [True] * len(s.block)
        s.sums = [0] * len(s.block)
        s.cnts = [0] * len(s.block)
        s.bench_arm, s.bench_sum, s.bench_cnt = s.a_star, s.star_sum, s.star_cnt

    def _trace(self, **event):
        if self.tracer is not None:
            self.tracer.append(event)

    def close_batch(self, s, t_end):
        if s.phase == REFRESH:
            s.star_sum, s.star_cnt = s.init_sum, s.init_cnt
            self._trace(kind="init", i=s.i, arm=s.a_init, sum=s.init_sum, cnt=s.init_cnt)
            s.j = 1
            self._start_block(s)
        elif s.phase == SLOT:
            bench = _mean(s.bench_sum, s.bench_cnt)
            c = self.radius(s.k)
            for p, a in enumerate(s.block):
                if not s.active[p]:
                    continue
                mu = _mean(s.sums[p], s.cnts[p])
                drop = mu < bench - 2.0 * c
                self._trace(kind="challenger", i=s.i, j=s.j, k=s.k, arm=a, sum=s.sums[p],
                            cnt=s.cnts[p], deactivated=drop)
                if drop:
                    s.active[p] = False
            if s.k < s.i:
                s.k += 1
                s.sums = [0] * len(s.block)
                s.cnts = [0] * len(s.block)
            else:
                self._end_block(s)
        return s

    def _end_block(self, s):
        best = None
        for p, on in enumerate(s.active):
            if on and (best is None or s.sums[p] * s.cnts[best] > s.sums[best] * s.cnts[p]):
                best = p
        bench = _mean(s.bench_sum, s.bench_cnt)
        replaced = (best is not None
                    and _mean(s.sums[best], s.cnts[best]) >= bench + 2.0 * self.radius(s.i))
        old = s.a_star
        if replaced:
            s.a_star = s.block[best]
            s.star_sum, s.star_cnt = s.sums[best], s.cnts[best]
        self._trace(kind="block_end", i=s.i, j=s.j, bench_arm=s.bench_arm, before=old,
                    after=s.a_star, replaced=replaced)
        s.j += 1
        if s.j <= self.J:
            self._start_block(s)
            return
        self._trace(kind="iteration_end", i=s.i, incumbent=s.a_star)
        s.i += 1
        s.j = s.k = 0
        s.block, s.active, s.sums, s.cnts = [], [], [], []
        s.init_sum = s.init_cnt = 0
        if s.i <= self.L:
            s.phase = REFRESH
            s.a_init = s.a_star
        else:
            s.phase = FINAL

    def encode(self, s):
        w, aw = self._w, self._aw
        out = BitWriter()
        out.uint(s.phase, 2).uint(s.i, w).uint(s.j, w).uint(s.k, w)
        out.uint(s.a_init, aw).uint(s.a_star, aw)
        out.uint(s.star_sum, w).uint(s.star_cnt, w).uint(s.init_sum, w).uint(s.init_cnt, w)
        out.uint(s.bench_arm, aw).uint(s.bench_sum, w).uint(s.bench_cnt, w)
        out.uint(len(s.block), self._bw)
        for a, on, total, n in zip(s.block, s.active, s.sums, s.cnts):
            out.uint(a, aw).flag(on).uint(total, w).uint(n, w)
        return out.bits()

    def decode(self, bits):
        w, aw = self._w, self._aw
        r = BitReader(bits)
        s = AlgoState(r.uint(2), r.uint(w), r.uint(w), r.uint(w), r.uint(aw), r.uint(aw),
                      r.uint(w), r.uint(w), r.uint(w), r.uint(w), r.uint(aw), r.uint(w), r.uint(w))
        m = r.uint(self._bw)
        for _ in range(m):
            s.block.append(r.uint(aw))
            s.active.append(r.flag())
            s.sums.append(r.uint(w))
            s.cnts.append(r.uint(w))
        if not r.done():
            raise ValueError("trailing bits in state encoding")
        return s


def algorithm1_policy(K, S, T, delta=None, fallback=False):
    """Build the block-scanning policy.

    Below ``T = 40K`` the schedule is empty; with ``fallback`` the one-batch
    constant policy on arm 1 is returned instead (with a RegimeWarning),
    otherwise :class:`HorizonTooSmall` is raised.
    """
    if not 1 <= S <= K:
        raise BlockSizeInvalid(f"block size must satisfy 1 <= S <= K={K}, got S={S}")
    if T < 40 * K and fallback:
        warnings.warn(f"T={T} < 40K; using the one-batch constant policy", RegimeWarning, stacklevel=2)
        return ConstantPolicy(K, T, arm=0)
    return BlockScanPolicy(K, S, T, delta)


class ConstantPolicy(Policy):
    """Pulls one arm for the whole horizon in a single batch; no state."""

    def __init__(self, K, T, arm=0):
        self.arm_count = K
        self.horizon = T
        self.arm = arm
        self.budget_bits = 0

    def static_grid(self, seed=None):
        return (self.horizon,)

    def initial_state(self):
        return None

    def plan_batch(self, t_prev, state, seed):
        return BatchPlan(self.horizon, ((self.arm, self.horizon - t_prev),))

    def observe(self, state, arm, reward):
        return state

    def observe_segment(self, state, arm, rewards):
        return state

    def encode(self, state):
        return BitWriter().bits()

    def decode(self, bits):
        return None


@dataclass
class ArmStats:
    sums: list
    cnts: list
    active: list = None


class _PerArmCodec:
    def _encode_stats(self, s, with_flags):
        out = BitWriter()
        for p in range(self.arm_count):
            if with_flags:
                out.flag(s.active[p])
            out.uint(s.sums[p], self._w).uint(s.cnts[p], self._w)
        return out.bits()

    def _decode_stats(self, bits, with_flags):
        r = BitReader(bits)
        sums, cnts, active = [], [], []
        for _ in range(self.arm_count):
            if with_flags:
                active.append(r.flag())
            sums.append(r.uint(self._w))
            cnts.append(r.uint(self._w))
        return ArmStats(sums, cnts, active if with_flags else None)

    def observe(self, s, arm, reward):
        s.sums[arm] += int(reward)
        s.cnts[arm] += 1
        return s

    def observe_segment(self, s, arm, rewards):
        s.sums[arm] += int(np.sum(rewards))
        s.cnts[arm] += len(rewards)
        return s


class UCBPolicy(_PerArmCodec, Policy):
    """Fully sequential UCB1: T single-round batches, unbounded memory."""

    def __init__(self, K, T):
        self.arm_count = K
        self.horizon = T
        self.budget_bits = None
        self._w = int_width(T)

    def static_grid(self, seed=None):
        return tuple(range(1, self.horizon + 1))

    def initial_state(self):
        return ArmStats([0] * self.arm_count, [0] * self.arm_count)

    def plan_batch(self, t_prev, s, seed):
        for a in range(self.arm_count):
            if s.cnts[a] == 0:
                return BatchPlan(t_prev + 1, ((a, 1),))
        logt = math.log(max(t_prev, 1))
        best, best_index = 0, -math.inf
        for a in range(self.arm_count):
            index = s.sums[a] / s.cnts[a] + math.sqrt(2.0 * logt / s.cnts[a])
            if index > best_index:
                best, best_index = a, index
        return BatchPlan(t_prev + 1, ((best, 1),))

    def encode(self, s):
        return self._encode_stats(s, False)

    def decode(self, bits):
        return self._decode_stats(bits, False)


class BatchedEliminationPolicy(_PerArmCodec, Policy):
    """Batched successive elimination keeping the full active set.

    Uses the same outer grid lengths: batch ``i`` has ``K * t_i`` rounds
    shared evenly among active arms, then a final batch over the survivors.
    An arm is dropped when its upper bound falls below the best lower bound.
    """

    def __init__(self, K, T, delta=None):
        self.arm_count = K
        self.horizon = T
        self.budget_bits = None
        self.conf = ConfidenceParams(float(T) ** -4 if delta is None else delta)
        self.lengths = build_schedule(T, K).lengths[1:] if T >= 40 * K else ()
        self._w = int_width(T)
        ends, now = [], 0
        for t in self.lengths:
            now += K * t
            ends.append(now)
        self._ends = tuple(ends) + (T,)

    def static_grid(self, seed=None):
        return self._ends

    def initial_state(self):
        K = self.arm_count
        return ArmStats([0] * K, [0] * K, [True] * K)

    def plan_batch(self, t_prev, s, seed):
        b = self._ends.index(t_prev) + 1 if t_prev else 0
        end = self._ends[b]
        live = [a for a in range(self.arm_count) if s.active[a]]
        share, extra = divmod(end - t_prev, len(live))
        return BatchPlan(end, tuple((a, share + (1 if p < extra else 0)) for p, a in enumerate(live)))

    def close_batch(self, s, t_end):
        live = [a for a in range(self.arm_count) if s.active[a] and s.cnts[a] > 0]
        if len(live) < 2:
            return s
        mu = {a: s.sums[a] / s.cnts[a] for a in live}
        rad = {a: confidence_radius(self.conf, s.cnts[a]) for a in live}
        best_lower = max(mu[a] - rad[a] for a in live)
        for a in live:
            if mu[a] + rad[a] < best_lower:
                s.active[a] = False
        return s

    def encode(self, s):
        return self._encode_stats(s, True)

    def decode(self, bits):
        return self._decode_stats(bits, True)


@dataclass
class GoodEventReport:
    """Post-hoc audit of one traced run against the true means."""
    concentration_holds: bool
    radius_violations: int
    best_arm_deactivated: int
    incumbent_decreases: int
    final_gap: float
    final_gap_bound: float
    survivor_gap_violations: int
    iteration_gap_violations: int

    @property
    def final_gap_ok(self):
        return self.final_gap <= self.final_gap_bound + 1e-12

    @property
    def all_ok(self):
        return (self.best_arm_deactivated == 0 and self.incumbent_decreases == 0
                and self.final_gap_ok and self.survivor_gap_violations == 0
                and self.iteration_gap_violations == 0)


def good_event_report(policy, trace, instance):
    """Check the good-event consequences on a trace of ``BlockScanPolicy``.

    The concentration event holds when every computed empirical mean is
    within its radius of the true mean; on that event the best arm is never
    deactivated, incumbent true means never decrease across block updates,
    each iteration's final incumbent has gap at most ``4 c(t_i)`` and an arm
    reaching level k has gap at most ``8 c(t_{k-1})``.
    """
    mu = np.asarray(instance.means)
    mu_star = mu.max()
    gap = mu_star - mu
    eps = 1e-12
    violations = 0
    deact_best = dec = surv = iter_bad = 0
    final_incumbent = 0
    for ev in trace:
        kind = ev["kind"]
        if kind == "init":
            if abs(ev["sum"] / ev["cnt"] - mu[ev["arm"]]) > policy.radius(ev["i"]) + eps:
                violations += 1
        elif kind == "challenger":
            if abs(ev["sum"] / ev["cnt"] - mu[ev["arm"]]) > policy.radius(ev["k"]) + eps:
                violations += 1
            if ev["deactivated"] and gap[ev["arm"]] <= eps:
                deact_best += 1
            if ev["k"] >= 2 and gap[ev["arm"]] > 8 * policy.radius(ev["k"] - 1) + eps:
                surv += 1
        elif kind == "block_end":
            if mu[ev["after"]] < mu[ev["before"]] - eps:
                dec += 1
        elif kind == "iteration_end":
            final_incumbent = ev["incumbent"]
            if gap[final_incumbent] > 4 * policy.radius(ev["i"]) + eps:
                iter_bad += 1
    return GoodEventReport(
        concentration_holds=violations == 0, radius_violations=violations,
        best_arm_deactivated=deact_best, incumbent_decreases=dec,
        final_gap=float(gap[final_incumbent]), final_gap_bound=4 * policy.radius(policy.L),
        survivor_gap_violations=surv, iteration_gap_violations=iter_bad)
