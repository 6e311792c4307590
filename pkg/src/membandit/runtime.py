"""Execution model for batched policies with a bit-bounded persistent state.

A policy commits to a :class:`BatchPlan` at each batch boundary using only
the public clock, its boundary state and the seed. The runtime executes that
plan verbatim, feeds the rewards back through the per-round state update and
charges the canonical state encoding against the bit budget.
"""
import csv
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from . import randomness
from .bits import BitString
from .errors import BudgetExceeded, CommitmentViolation, GridError, ReplayMismatch
from .instances import RewardStream

STATIC = "static"
ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class BatchPlan:
    """A committed batch: ends at round ``end_round``; ``schedule`` is a
    sequence of ``(arm, repeat_count)`` segments executed in order."""
    end_round: int
    schedule: tuple

    def __post_init__(self):
        sched = tuple((int(a), int(c)) for a, c in self.schedule if int(c) != 0)
        if any(c < 0 for _, c in sched):
            raise GridError("segment lengths must be positive")
        object.__setattr__(self, "schedule", sched)

    @property
    def length(self):
        return sum(c for _, c in self.schedule)

    def pull_counts(self, K):
        n = np.zeros(K, dtype=np.int64)
        for a, c in self.schedule:
            n[a] += c
        return n

    def actions(self):
        if not self.schedule:
            return np.zeros(0, dtype=np.int32)
        arms, counts = zip(*self.schedule)
        return np.repeat(np.asarray(arms, dtype=np.int32), counts)


class Policy:
    """Behavioral contract for a batched, space-bounded policy.

    Subclasses implement ``initial_state``, ``plan_batch``, ``observe``,
    ``encode`` and ``decode``. ``plan_batch`` must be a pure function of
    ``(t_prev, state, seed)``. ``close_batch`` is the state update applied
    at the last round of a batch (the update map may depend on the public
    clock). ``observe_segment`` folds ``observe`` over a run of rewards from
    one arm and may be overridden for speed.

    A policy that sets ``emits_actions`` produces its own action each round
    through ``act``; the runtime then checks every emitted action against the
    committed plan.
    """
    arm_count = None
    horizon = None
    budget_bits = None
    emits_actions = False

    def initial_state(self):
        raise NotImplementedError

    def plan_batch(self, t_prev, state, seed):
        raise NotImplementedError

    def observe(self, state, arm, reward):
        raise NotImplementedError

    def observe_segment(self, state, arm, rewards):
        for r in rewards:
            state = self.observe(state, arm, int(r))
        return state

    def close_batch(self, state, t_end):
        return state

    def encode(self, state):
        raise NotImplementedError

    def decode(self, bits):
        raise NotImplementedError

    def static_grid(self, seed):
        """Full batch end sequence ``(t_1, ..., t_B)`` if fixed in advance."""
        return None

    def act(self, state, t, plan, offset):
        return int(plan.actions()[offset])


@dataclass
class Transcript:
    horizon: int
    arm_count: int
    segments: list
    rewards: np.ndarray
    pull_counts: np.ndarray
    grid: tuple
    boundary_states: tuple
    initial_state: BitString
    seed: int
    master_seed: int
    peak_state_bits: int
    batch_pull_counts: np.ndarray
    batch_state_bits: tuple
    grid_mode: str = STATIC
    _actions: np.ndarray = field(default=None, repr=False)

    @property
    def n_batches(self):
        return len(self.grid) + 1

    @property
    def batch_ends(self):
        return tuple(self.grid) + (self.horizon,)

    @property
    def actions(self):
        if self._actions is None:
            if self.segments:
                arms, counts = zip(*self.segments)
                self._actions = np.repeat(np.asarray(arms, dtype=np.int32), counts)
            else:
                self._actions = np.zeros(0, dtype=np.int32)
        return self._actions

    def pull_counts_at(self, t):
        """``N_i(t)`` for every arm."""
        return np.bincount(self.actions[:t], minlength=self.arm_count).astype(np.int64)

    def boundary_bits(self):
        return sum(len(s) for s in self.boundary_states)

    def batch_rows(self):
        rows = []
        t_prev = 0
        for b, t_end in enumerate(self.batch_ends):
            rows.append({
                "batch": b + 1,
                "t_start": t_prev,
                "t_end": t_end,
                **{f"n_{i + 1}": int(self.batch_pull_counts[b, i]) for i in range(self.arm_count)},
                "state_bits": int(self.batch_state_bits[b]),
            })
            t_prev = t_end
        return rows

    def to_csv(self):
        buf = io.StringIO()
        rows = self.batch_rows()
        fields = ["batch", "t_start", "t_end"] + [f"n_{i + 1}" for i in range(self.arm_count)] + ["state_bits"]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()

    def to_bytes(self):
        """Compact binary record: header, grid, boundary states, run-length
        actions and bit-packed rewards."""
        out = io.BytesIO()
        B = self.n_batches
        out.write(b"MBT1")
        out.write(struct.pack(">QIIQQQB", self.horizon, self.arm_count, B, self.seed,
                              self.master_seed, self.peak_state_bits,
                              0 if self.grid_mode == STATIC else 1))
        out.write(struct.pack(f">{B - 1}Q", *self.grid))
        for s in (self.initial_state,) + tuple(self.boundary_states):
            data = s.to_bytes()
            out.write(struct.pack(">I", s.length))
            out.write(data)
        out.write(struct.pack(f">{B}I", *self.batch_state_bits))
        out.write(self.batch_pull_counts.astype(">i8").tobytes())
        out.write(struct.pack(">I", len(self.segments)))
        for a, c in self.segments:
            out.write(struct.pack(">IQ", a, c))
        out.write(np.packbits(self.rewards.astype(np.uint8)).tobytes())
        return out.getvalue()

    @classmethod
    def from_bytes(cls, data):
        buf = io.BytesIO(data)
        if buf.read(4) != b"MBT1":
            raise ValueError("not a transcript record")
        T, K, B, seed, master, peak, mode = struct.unpack(">QIIQQQB", buf.read(41))
        grid = struct.unpack(f">{B - 1}Q", buf.read(8 * (B - 1)))
        states = []
        for _ in range(B):
            (length,) = struct.unpack(">I", buf.read(4))
            states.append(BitString.from_bytes(buf.read((length + 7) // 8), length))
        batch_bits = struct.unpack(f">{B}I", buf.read(4 * B))
        bpc = np.frombuffer(buf.read(8 * B * K), dtype=">i8").astype(np.int64).reshape(B, K)
        (nseg,) = struct.unpack(">I", buf.read(4))
        segs = [struct.unpack(">IQ", buf.read(12)) for _ in range(nseg)]
        rewards = np.unpackbits(np.frombuffer(buf.read(), dtype=np.uint8))[:T]
        counts = bpc.sum(axis=0)
        return cls(T, K, [(int(a), int(c)) for a, c in segs], rewards, counts, tuple(int(g) for g in grid),
                   tuple(states[1:]), states[0], seed, master, peak, bpc, tuple(batch_bits),
                   STATIC if mode == 0 else ADAPTIVE)


def _charge(policy, state, budget, round_index):
    bits = len(policy.encode(state))
    if budget is not None and bits > budget:
        raise BudgetExceeded(round_index, bits, budget)
    return bits


def run(policy, instance, T, master_seed, grid_mode=STATIC, budget_bits=None,
        enforce_commitment=True, flip_window=None, stop_after=None):
    """Execute ``policy`` on ``instance`` for ``T`` rounds.

    ``flip_window=(lo, hi)`` replaces every reward observed in rounds
    ``lo+1 .. hi`` by its complement (used for counterfactual commitment
    checks); ``stop_after`` ends the run at the first batch boundary at or
    past that round, returning a truncated transcript.
    """
    if T < 1:
        raise GridError("horizon must be at least 1")
    if grid_mode not in (STATIC, ADAPTIVE):
        raise ValueError(f"unknown grid mode {grid_mode!r}")
    K = instance.arm_count
    if policy.arm_count is not None and policy.arm_count != K:
        raise ValueError(f"policy built for K={policy.arm_count}, instance has K={K}")
    if policy.horizon is not None and policy.horizon != T:
        raise ValueError(f"policy built for T={policy.horizon}, run requested T={T}")
    budget = policy.budget_bits if budget_bits is None else budget_bits
    U = randomness.policy_seed(master_seed)
    stream = RewardStream(master_seed, instance)
    flip_lo, flip_hi = flip_window if flip_window is not None else (-1, -1)

    state = policy.initial_state()
    m0 = policy.encode(state)
    peak = _charge(policy, state, budget, 0)
    static = policy.static_grid(U) if grid_mode == STATIC else None
    if grid_mode == STATIC and static is None:
        raise GridError("static-grid run needs a policy with a grid fixed in advance")

    counts = np.zeros(K, dtype=np.int64)
    segments, reward_chunks = [], []
    grid, boundary, batch_counts, batch_bits = [], [], [], []
    t = 0
    b = 0
    end = T if stop_after is None else min(T, stop_after)
    while t < end:
        b += 1
        before = policy.encode(state)
        plan = policy.plan_batch(t, state, U)
        if policy.encode(state) != before:
            raise CommitmentViolation("plan_batch modified the persistent state", batch=b)
        if not t < plan.end_round <= T:
            raise GridError(f"batch {b}: end {plan.end_round} outside ({t}, {T}]")
        if plan.length != plan.end_round - t:
            raise GridError(f"batch {b}: schedule covers {plan.length} rounds, expected {plan.end_round - t}")
        if static is not None and (b > len(static) or static[b - 1] != plan.end_round):
            raise GridError(f"batch {b}: end {plan.end_round} departs from the static grid")
        bc = np.zeros(K, dtype=np.int64)
        if policy.emits_actions:
            planned = plan.actions()
            for off in range(plan.length):
                rnd = t + off + 1
                a = int(policy.act(state, rnd, plan, off))
                if enforce_commitment and a != planned[off]:
                    raise CommitmentViolation(
                        f"batch {b}, round {rnd}: emitted arm {a + 1}, plan says {planned[off] + 1}",
                        batch=b, round_index=rnd)
                r = int(stream.block(a, int(counts[a]) + 1, 1)[0])
                if flip_lo < rnd <= flip_hi:
                    r = 1 - r
                counts[a] += 1
                bc[a] += 1
                state = policy.observe(state, a, r)
                peak = max(peak, _charge(policy, state, budget, rnd))
                if segments and segments[-1][0] == a:
                    segments[-1] = (a, segments[-1][1] + 1)
                else:
                    segments.append((a, 1))
                reward_chunks.append(np.array([r], dtype=np.uint8))
        else:
            rnd = t
            for a, c in plan.schedule:
                r = stream.block(a, int(counts[a]) + 1, c)
                lo, hi = max(flip_lo - rnd, 0), min(flip_hi - rnd, c)
                if lo < hi:
                    r = r.copy()
                    r[lo:hi] ^= 1
                counts[a] += c
                bc[a] += c
                rnd += c
                state = policy.observe_segment(state, a, r)
                peak = max(peak, _charge(policy, state, budget, rnd))
                if segments and segments[-1][0] == a:
                    segments[-1] = (a, segments[-1][1] + c)
                else:
                    segments.append((a, c))
                reward_chunks.append(r)
        t = plan.end_round
        state = policy.close_batch(state, t)
        enc = policy.encode(state)
        bits = len(enc)
        if budget is not None and bits > budget:
            raise BudgetExceeded(t, bits, budget)
        peak = max(peak, bits)
        batch_counts.append(bc)
        batch_bits.append(bits)
        if t < T:
            grid.append(t)
            boundary.append(enc)
    if stop_after is None and static is not None and tuple(grid) + (T,) != tuple(static):
        raise GridError("realized grid differs from the static grid")

    rewards = np.concatenate(reward_chunks) if reward_chunks else np.zeros(0, dtype=np.uint8)
    return Transcript(
        horizon=t, arm_count=K, segments=segments, rewards=rewards, pull_counts=counts,
        grid=tuple(grid[:-1]) if t < T else tuple(grid),
        boundary_states=tuple(boundary[:-1]) if t < T else tuple(boundary),
        initial_state=m0, seed=U, master_seed=master_seed, peak_state_bits=peak,
        batch_pull_counts=np.array(batch_counts, dtype=np.int64).reshape(-1, K),
        batch_state_bits=tuple(batch_bits), grid_mode=grid_mode)


@dataclass
class CommitmentReport:
    passed: bool
    batches_checked: int
    first_divergence: tuple | None = None

    def __bool__(self):
        return self.passed


def commitment_check(policy, instance, T, master_seed, grid_mode=STATIC):
    """Counterfactual check that within-batch rewards never steer actions.

    For each batch of a reference run, replays the run with every reward of
    that batch flipped and requires the batch's realized actions to be
    identical. Later batches may legitimately differ.
    """
    ref = run(policy, instance, T, master_seed, grid_mode, enforce_commitment=False)
    ends = ref.batch_ends
    t_prev = 0
    for b, t_end in enumerate(ends, start=1):
        cf = run(policy, instance, T, master_seed, grid_mode, enforce_commitment=False,
                 flip_window=(t_prev, t_end), stop_after=t_end)
        ra = ref.actions[t_prev:t_end]
        ca = cf.actions[t_prev:t_end]
        if len(ca) != len(ra) or not np.array_equal(ra, ca):
            n = min(len(ra), len(ca))
            diff = np.nonzero(ra[:n] != ca[:n])[0]
            off = int(diff[0]) if len(diff) else n
            return CommitmentReport(False, b, (b, t_prev + off + 1))
        t_prev = t_end
    return CommitmentReport(True, len(ends))


@dataclass
class ReplayReport:
    passed: bool
    pull_counts: np.ndarray
    grid: tuple
    batch_pull_counts: np.ndarray

    def profile(self, n):
        return (self.pull_counts >= n).astype(np.int8)


def boundary_replay(transcript, policy):
    """Recompute pull counts (and the grid) from the seed and boundary states.

    Each batch's pull-count vector is recomputed by calling ``plan_batch`` on
    the decoded boundary state; nothing observed inside batches is used.
    Raises :class:`ReplayMismatch` on any divergence.
    """
    K = transcript.arm_count
    T = transcript.horizon
    U = transcript.seed
    states = (transcript.initial_state,) + tuple(transcript.boundary_states)
    if transcript.grid_mode == STATIC:
        static = policy.static_grid(U)
        if static is None or tuple(static[:-1]) != tuple(transcript.grid):
            raise ReplayMismatch("static grid does not reproduce the recorded grid", batch=0)
    total = np.zeros(K, dtype=np.int64)
    rows = []
    grid = []
    t_prev = 0
    for b, enc in enumerate(states, start=1):
        if transcript.grid_mode == STATIC:
            t_prev = 0 if b == 1 else static[b - 2]
        plan = policy.plan_batch(t_prev, policy.decode(enc), U)
        counts = plan.pull_counts(K)
        if not np.array_equal(counts, transcript.batch_pull_counts[b - 1]):
            raise ReplayMismatch(f"batch {b}: replayed pull counts differ", batch=b)
        total += counts
        rows.append(counts)
        t_prev = plan.end_round
        if b < len(states):
            grid.append(t_prev)
    if transcript.grid_mode == ADAPTIVE and tuple(grid) != tuple(transcript.grid):
        raise ReplayMismatch("recursively replayed grid differs", batch=len(states))
    if t_prev != T:
        raise ReplayMismatch("replayed batches do not end at the horizon", batch=len(states))
    if not np.array_equal(total, transcript.pull_counts):
        raise ReplayMismatch("replayed totals differ from N_i(T)", batch=len(states))
    return ReplayReport(True, total, tuple(grid), np.array(rows).reshape(-1, K))
