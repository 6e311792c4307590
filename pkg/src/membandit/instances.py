"""Bandit instances, the Bernoulli hard family and pull-indexed reward streams.

Arms are 0-based in the Python API and 1-based in every serialized record.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels, randomness
from .errors import InvalidHardFamily, InvalidPerturbation


class RewardKind(str, Enum):
    BERNOULLI = "bernoulli"


@dataclass(frozen=True)
class GoodArmSet:
    arm_count: int
    members: frozenset

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(a) for a in self.members))
        if self.arm_count < 2 or self.arm_count % 2:
            raise InvalidHardFamily(f"hard family needs an even K >= 2, got K={self.arm_count}")
        if len(self.members) != self.arm_count // 2:
            raise InvalidHardFamily(
                f"good set must have exactly K/2={self.arm_count // 2} arms, got {len(self.members)}")
        if any(a < 0 or a >= self.arm_count for a in self.members):
            raise InvalidHardFamily("good set members must lie in [0, K)")

    @classmethod
    def from_external(cls, arms, arm_count):
        """Build from 1-based arm labels."""
        return cls(arm_count, frozenset(a - 1 for a in arms))

    def external(self):
        return sorted(a + 1 for a in self.members)

    def indicator(self):
        x = np.zeros(self.arm_count, dtype=np.int8)
        x[list(self.members)] = 1
        return x


@dataclass(frozen=True)
class PerturbationSpec:
    arm: int
    gap: float


@dataclass(frozen=True)
class BanditInstance:
    means: tuple
    kind: RewardKind = RewardKind.BERNOULLI
    good_set: GoodArmSet | None = None
    perturbation: PerturbationSpec | None = None

    def __post_init__(self):
        means = tuple(float(m) for m in self.means)
        if not means:
            raise ValueError("an instance needs at least one arm")
        if any(not 0.0 <= m <= 1.0 for m in means):
            raise ValueError(f"arm means must lie in [0, 1], got {means}")
        object.__setattr__(self, "means", means)

    @property
    def arm_count(self):
        return len(self.means)

    @property
    def best_mean(self):
        return max(self.means)

    def gaps(self):
        mu = np.asarray(self.means)
        return mu.max() - mu

    def to_record(self):
        rec = {"K": self.arm_count, "means": list(self.means), "kind": self.kind.value}
        if self.good_set is not None:
            rec["good_set"] = self.good_set.external()
        if self.perturbation is not None:
            rec["perturbation"] = {"arm": self.perturbation.arm + 1, "gap": self.perturbation.gap}
        return rec

    @classmethod
    def from_record(cls, rec):
        K = int(rec["K"])
        if len(rec["means"]) != K:
            raise ValueError("K does not match the number of means")
        good = rec.get("good_set")
        pert = rec.get("perturbation")
        return cls(
            tuple(rec["means"]),
            RewardKind(rec.get("kind", "bernoulli")),
            GoodArmSet.from_external(good, K) if good is not None else None,
            PerturbationSpec(int(pert["arm"]) - 1, float(pert["gap"])) if pert is not None else None,
        )


def make_hard_instance(good_set):
    """Mean 1/2 on the good arms and 0 elsewhere."""
    means = tuple(0.5 if i in good_set.members else 0.0 for i in range(good_set.arm_count))
    return BanditInstance(means, good_set=good_set)


def perturb(instance, spec):
    """Raise the mean of one good arm to 1/2 + gap, leaving the rest untouched."""
    good = instance.good_set
    if good is None:
        raise InvalidPerturbation("perturbation needs a hard-family instance")
    if spec.arm not in good.members:
        raise InvalidPerturbation(f"arm {spec.arm + 1} is not in the good set")
    if not 0.0 < spec.gap <= 0.5:
        raise InvalidPerturbation(f"gap must lie in (0, 1/2], got {spec.gap}")
    means = list(instance.means)
    means[spec.arm] = 0.5 + spec.gap
    return BanditInstance(tuple(means), instance.kind, good, spec)


def sample_good_set(K, seed):
    """Uniform K/2-subset of the arms, deterministic in ``seed``."""
    if K < 2 or K % 2:
        raise InvalidHardFamily(f"hard family needs an even K >= 2, got K={K}")
    rng = np.random.default_rng(seed)
    return GoodArmSet(K, frozenset(int(a) for a in rng.choice(K, K // 2, replace=False)))


def random_instance(K, seed):
    """Means i.i.d. uniform on [0, 1]."""
    rng = np.random.default_rng(seed)
    return BanditInstance(tuple(rng.uniform(0.0, 1.0, K)))


@dataclass(frozen=True)
class RewardStream:
    """Pre-committed reward table ``X[i, l]`` realized lazily.

    ``X[i, l] = 1{U(seed, i, l) < mu_i}`` for a keyed uniform U, so two
    instances that differ on one arm share every other arm's rewards, and
    raising a mean can only flip rewards from 0 to 1.
    """
    master_seed: int
    instance: BanditInstance
    _keys: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        s = randomness.reward_seed(self.master_seed)
        object.__setattr__(
            self, "_keys", tuple(randomness.arm_key(s, i) for i in range(self.instance.arm_count)))

    def _check(self, arm):
        if not 0 <= arm < self.instance.arm_count:
            raise IndexError(f"arm {arm} out of range for K={self.instance.arm_count}")

    def draw(self, arm, pull_index):
        self._check(arm)
        if pull_index < 1:
            raise ValueError("pull indices start at 1")
        stream_seed = randomness.reward_seed(self.master_seed)
        return int(randomness.uniform(stream_seed, arm, pull_index) < self.instance.means[arm])

    def block(self, arm, start, count):
        """Rewards for (1-based) pulls ``start .. start+count-1`` of ``arm`` as uint8."""
        self._check(arm)
        return kernels.bernoulli_block(self._keys[arm], start, count, self.instance.means[arm])


def draw(stream, arm, pull_index):
    return stream.draw(arm, pull_index)
