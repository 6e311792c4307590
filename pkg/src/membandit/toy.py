"""Small reference policies for exercising the runtime: a round-robin
schedule, an adaptive-grid policy, and a negative control that peeks at
within-batch rewards."""
from dataclasses import dataclass

from .bits import BitReader, BitWriter, int_width
from .runtime import BatchPlan, Policy


class RoundRobinPolicy(Policy):
    """Cycles through the arms one round at a time, in batches of ``batch_len``."""

    def __init__(self, K, T, batch_len=None):
        self.arm_count = K
        self.horizon = T
        self.batch_len = batch_len or T
        self.budget_bits = 0

    def static_grid(self, seed=None):
        ends = list(range(self.batch_len, self.horizon, self.batch_len))
        return tuple(ends) + (self.horizon,)

    def initial_state(self):
        return None

    def plan_batch(self, t_prev, state, seed):
        end = min(self.horizon, t_prev + self.batch_len)
        return BatchPlan(end, tuple((t % self.arm_count, 1) for t in range(t_prev, end)))

    def observe(self, state, arm, reward):
        return state

    def observe_segment(self, state, arm, rewards):
        return state

    def encode(self, state):
        return BitWriter().bits()

    def decode(self, bits):
        return None


@dataclass
class _Last:
    arm: int = 0
    reward: int = 0
    seen: bool = False


class CheatingPolicy(RoundRobinPolicy):
    """Announces a round-robin plan, then repeats an arm whenever its last
    reward was 1. Violates commitment by design."""
    emits_actions = True

    def __init__(self, K, T, batch_len=None):
        super().__init__(K, T, batch_len)
        self.budget_bits = None

    def initial_state(self):
        return _Last()

    def act(self, state, t, plan, offset):
        planned = int(plan.actions()[offset])
        if offset > 0 and state.seen and state.reward == 1:
            return state.arm
        return planned

    def observe(self, state, arm, reward):
        return _Last(arm, int(reward), True)

    def observe_segment(self, state, arm, rewards):
        for r in rewards:
            state = self.observe(state, arm, r)
        return state

    def encode(self, s):
        return BitWriter().uint(s.arm, int_width(self.arm_count - 1)).flag(s.reward).flag(s.seen).bits()

    def decode(self, bits):
        r = BitReader(bits)
        return _Last(r.uint(int_width(self.arm_count - 1)), int(r.flag()), r.flag())


@dataclass
class _Tally:
    successes: int = 0


class AdaptiveGridPolicy(Policy):
    """Chooses each batch length and arm from a success counter, so the grid
    depends on observed rewards (adaptive-grid model)."""

    def __init__(self, K, T):
        self.arm_count = K
        self.horizon = T
        self.budget_bits = int_width(T)

    def initial_state(self):
        return _Tally()

    def plan_batch(self, t_prev, s, seed):
        length = min(self.horizon - t_prev, 2 + (s.successes + seed) % 5)
        arm = (s.successes + t_prev) % self.arm_count
        return BatchPlan(t_prev + length, ((arm, length),))

    def observe(self, s, arm, reward):
        s.successes += int(reward)
        return s

    def observe_segment(self, s, arm, rewards):
        s.successes += int(sum(int(r) for r in rewards))
        return s

    def encode(self, s):
        return BitWriter().uint(s.successes, int_width(self.horizon)).bits()

    def decode(self, bits):
        return _Tally(BitReader(bits).uint(int_width(self.horizon)))
