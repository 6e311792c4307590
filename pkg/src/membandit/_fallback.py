"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` exactly and are used when the compiled
extension is unavailable (or when ``MEMBANDIT_PURE_PYTHON=1``).
"""
import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 2.0 ** -53

_CHUNK = 1 << 20


def _mix_array(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def bernoulli_block(key, start, count, mean):
    """Draws for pull indices ``start .. start+count-1`` of one arm stream.

    ``key`` is the per-(seed, arm) stream key; see ``randomness.arm_key``.
    """
    if count <= 0:
        return np.zeros(0, dtype=np.uint8)
    idx = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix_array(np.uint64(key) + idx * _GAMMA)
    u = (h >> np.uint64(11)).astype(np.float64) * _INV53
    return (u < mean).astype(np.uint8)


def bernoulli_sum(key, start, count, mean):
    return int(bernoulli_block(key, start, count, mean).sum(dtype=np.int64))


def replay_tables(flat_table, offsets, K, T, arm, n, truncate, lo=0, hi=None):
    """Run a decision-table policy on every reward table in ``[lo, hi)``.

    A reward table is an integer whose bit ``i*T + (l-1)`` holds the reward of
    the l-th pull of arm i. The policy picks ``flat_table[offsets[t] + h]`` at
    step t, where h is the base-2K history code of the first t (action, reward)
    pairs. With ``truncate`` set, the rewards of ``arm`` beyond its n-th pull
    are replaced by 0.

    Returns (final history codes, first time ``arm`` is pulled for the
    (n+1)-st time, or T+1 if never).
    """
    if hi is None:
        hi = 1 << (K * T)
    codes_out = np.empty(hi - lo, dtype=np.int64)
    tau_out = np.empty(hi - lo, dtype=np.int32)
    base = 2 * K
    for c0 in range(lo, hi, _CHUNK):
        c1 = min(hi, c0 + _CHUNK)
        x = np.arange(c0, c1, dtype=np.int64)
        m = c1 - c0
        h = np.zeros(m, dtype=np.int64)
        counts = np.zeros((K, m), dtype=np.int64)
        tau = np.full(m, T + 1, dtype=np.int32)
        rows = np.arange(m)
        for t in range(T):
            a = flat_table[offsets[t] + h].astype(np.int64)
            ell = counts[a, rows]
            r = (x >> (a * T + ell)) & 1
            hit = a == arm
            if truncate:
                r = np.where(hit & (ell >= n), 0, r)
            tau[hit & (ell == n)] = t + 1
            counts[a, rows] += 1
            h = h * base + 2 * a + r
        codes_out[c0 - lo:c1 - lo] = h
        tau_out[c0 - lo:c1 - lo] = tau
    return codes_out, tau_out
