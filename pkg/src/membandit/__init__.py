"""Batched bandits under a persistent-memory budget: simulation runtime,
a block-scanning scheduler, information accounting and an exact
change-of-measure oracle."""
from .errors import MembanditError
from .instances import (BanditInstance, GoodArmSet, PerturbationSpec, RewardStream,
                        make_hard_instance, perturb, random_instance, sample_good_set)
from .kernels import BACKEND
from .runtime import (ADAPTIVE, STATIC, BatchPlan, Policy, Transcript, boundary_replay,
                      commitment_check, run)
from .scheduler import (BlockScanPolicy, BatchedEliminationPolicy, ConstantPolicy, UCBPolicy,
                        algorithm1_policy, batch_count, build_schedule, memory_bound_bits)

__version__ = "0.1.0"

__all__ = [
    "ADAPTIVE", "BACKEND", "STATIC", "BlockScanPolicy", "BanditInstance", "BatchPlan",
    "BatchedEliminationPolicy", "ConstantPolicy", "GoodArmSet", "MembanditError",
    "PerturbationSpec", "Policy", "RewardStream", "Transcript", "UCBPolicy",
    "algorithm1_policy", "batch_count", "boundary_replay", "build_schedule",
    "commitment_check", "make_hard_instance", "memory_bound_bits", "perturb",
    "random_instance", "run", "sample_good_set",
]
