"""Regret, thresholded sampling profiles and the information accounting
that links regret on the hard family to the batch-memory capacity."""
import math
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import xlogy
from scipy.stats import entropy

from .errors import DomainError, RegimeInvalid

C_DELTA = 8.0
ALPHA = math.log(1.8) / 512.0
BETA = 0.1


def _counts(x):
    return np.asarray(getattr(x, "pull_counts", x), dtype=np.int64)


def regret(transcript, instance):
    """Pseudo-regret ``sum_i N_i(T) (mu* - mu_i)``."""
    n = _counts(transcript)
    if len(n) != instance.arm_count:
        raise ValueError(f"transcript has {len(n)} arms, instance has {instance.arm_count}")
    return float(np.dot(n, instance.gaps()))


def hard_family_regret(transcript, good_set):
    """``1/2 * sum over bad arms of N_i(T)``; equals :func:`regret` on the
    hard instance of ``good_set``."""
    n = _counts(transcript)
    bad = [i for i in range(good_set.arm_count) if i not in good_set.members]
    return 0.5 * float(n[bad].sum())


@dataclass(frozen=True)
class Profile:
    n: int
    bits: tuple

    def as_array(self):
        return np.asarray(self.bits, dtype=np.int8)


def profile(transcript, n):
    """``Y_i = 1{N_i(T) >= n}``."""
    if n < 1:
        raise DomainError("threshold must be at least 1")
    return Profile(int(n), tuple(int(v) for v in (_counts(transcript) >= n)))


@dataclass(frozen=True)
class ErrorCounts:
    fp: int
    fn: int
    K: int

    @property
    def p_e(self):
        return (self.fp + self.fn) / self.K


def error_counts(prof, good_set):
    if len(prof.bits) != good_set.arm_count:
        raise ValueError("profile and good set disagree on K")
    y = prof.as_array()
    x = good_set.indicator()
    fp = int(np.sum((y == 1) & (x == 0)))
    fn = int(np.sum((y == 0) & (x == 1)))
    return ErrorCounts(fp, fn, good_set.arm_count)


def binary_entropy(p):
    """``H_b(p)`` in bits with ``0 log 0 = 0``."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"binary entropy needs p in [0, 1], got {p}")
    return float(-(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)) / math.log(2.0))


def info_lower_bound(K, p_e):
    """``K (1 - H_b(P_e)) - log2(2K) / 2`` bits; may be negative (vacuous).

    Error rates above 1/2 carry no more than a coin flip, so ``H_b`` is
    taken as 1 there.
    """
    h = 1.0 if p_e > 0.5 else binary_entropy(p_e)
    return K * (1.0 - h) - 0.5 * math.log2(2 * K)


def gamma0(beta=BETA):
    """Per-arm coefficient ``1 - H_b(1/2 - beta/4)``."""
    return 1.0 - binary_entropy(0.5 - beta / 4.0)


def prior_entropy(K):
    """Exact ``log2 C(K, K/2)``: entropy of a uniform half-size subset."""
    return math.log2(math.comb(K, K // 2))


def capacity_bound(transcript, W):
    """``(B - 1) W``: most bits the boundary states can carry."""
    B = transcript if isinstance(transcript, int) else transcript.n_batches
    return (B - 1) * W


def implied_min_batches(info_bits, W):
    return math.ceil(info_bits / W) + 1


@dataclass(frozen=True)
class LowerBoundConfig:
    T: int
    K: int
    C: float
    c_delta: float
    alpha: float
    beta: float
    delta0: float
    n: int

    @property
    def diagnostics(self):
        return {
            "delta0": self.delta0, "n": self.n,
            "delta0_le_quarter": self.delta0 <= 0.25,
            "n_ge_1": self.n >= 1,
            "n_le_half_T": self.n <= self.T / 2,
        }

    @property
    def regime_valid(self):
        d = self.diagnostics
        return d["delta0_le_quarter"] and d["n_ge_1"] and d["n_le_half_T"]

    def to_record(self):
        rec = asdict(self)
        rec.update(self.diagnostics)
        rec["regime_valid"] = self.regime_valid
        return rec


def lb_config(T, K, C=1.0, c_delta=C_DELTA, alpha=ALPHA, beta=BETA, strict=True):
    """Perturbation size and sampling threshold of the exploration argument.

    ``delta0 = c_delta C ln T ln K sqrt(K/T)`` and
    ``n = floor(alpha T / (C^2 K ln^2 T ln^2 K))``. With ``strict`` an
    invalid regime raises :class:`RegimeInvalid` listing the failed checks.
    """
    if T < 2 or K < 2:
        raise DomainError("need T, K >= 2")
    lt, lk = math.log(T), math.log(K)
    delta0 = c_delta * C * lt * lk * math.sqrt(K / T)
    n = math.floor(alpha * T / (C * C * K * lt * lt * lk * lk))
    cfg = LowerBoundConfig(T, K, C, c_delta, alpha, beta, delta0, n)
    if strict and not cfg.regime_valid:
        failed = [k for k in ("delta0_le_quarter", "n_ge_1", "n_le_half_T") if not cfg.diagnostics[k]]
        raise RegimeInvalid(f"lower-bound regime invalid for T={T}, K={K}, C={C}: failed {failed}",
                            cfg.to_record())
    return cfg


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    low: float
    high: float
    hits: int
    trials: int


def wilson(hits, trials, alpha=0.05):
    from statsmodels.stats.proportion import proportion_confint

    lo, hi = proportion_confint(hits, trials, alpha=alpha, method="wilson")
    return RateEstimate(hits / trials, max(0.0, float(lo)), min(1.0, float(hi)), int(hits), int(trials))


def exploration_rate(runs, arm, n):
    """Empirical ``P(N_arm(T) >= n)`` over runs, with a Wilson interval."""
    runs = list(runs)
    if not runs:
        raise ValueError("exploration rate needs at least one run")
    hits = sum(int(_counts(r)[arm] >= n) for r in runs)
    return wilson(hits, len(runs))


def boundary_entropy_estimate(runs):
    """Plug-in entropy (bits) of the encoded boundary-state tuples.

    Biased downward for small samples; a diagnostic companion to the
    ``(B-1) W`` capacity bound, never larger than it.
    """
    keys = Counter(tuple((s.value, s.length) for s in r.boundary_states) for r in runs)
    if not keys:
        return 0.0
    return float(entropy(list(keys.values()), base=2))
