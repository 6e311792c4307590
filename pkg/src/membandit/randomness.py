"""Keyed, counter-based randomness.

Everything random in a run is a pure function of a 64-bit master seed and a
small integer key, via the splitmix64 finalizer. This makes reward tables
lazily materializable and lets independent replications be reordered or
parallelized without changing results.
"""
MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15

# domain tags keep the reward stream, the policy seed and replication seeds apart
TAG_REWARDS = 0x5245574152445321
TAG_POLICY = 0x504F4C4943595321
TAG_REPLICATION = 0x5245504C49434121
TAG_ARM = 0x41524D5354524D21


def mix64(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive(seed, tag, index=0):
    """Child seed for ``(seed, tag, index)``."""
    return mix64(mix64(seed ^ tag) + (index + 1) * GAMMA)


def replication_seed(master_seed, index):
    return derive(master_seed, TAG_REPLICATION, index)


def reward_seed(master_seed):
    return derive(master_seed, TAG_REWARDS)


def policy_seed(master_seed):
    """The seed U handed to policies; exempt from the memory budget."""
    return derive(master_seed, TAG_POLICY)


def arm_key(stream_seed, arm):
    """Per-arm stream key; ``arm`` is 0-based."""
    return mix64(stream_seed ^ mix64(arm + TAG_ARM))


def uniform(stream_seed, arm, pull_index):
    """The uniform behind the ``pull_index``-th reward of ``arm`` (scalar path)."""
    h = mix64((arm_key(stream_seed, arm) + pull_index * GAMMA) & MASK64)
    return (h >> 11) * 2.0 ** -53
