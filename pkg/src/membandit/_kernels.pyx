# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; semantics identical to ``_fallback``."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, int32_t, uint8_t

cnp.import_array()

cdef uint64_t _GAMMA = 0x9E3779B97F4A7C15ULL
cdef double _INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def bernoulli_block(uint64_t key, uint64_t start, Py_ssize_t count, double mean):
    if count <= 0:
        return np.zeros(0, dtype=np.uint8)
    out = np.empty(count, dtype=np.uint8)
    cdef uint8_t[::1] view = out
    cdef Py_ssize_t s
    cdef uint64_t h
    with nogil:
        for s in range(count):
            h = _mix(key + (start + <uint64_t>s) * _GAMMA)
            view[s] = 1 if (<double>(h >> 11)) * _INV53 < mean else 0
    return out


def bernoulli_sum(uint64_t key, uint64_t start, Py_ssize_t count, double mean):
    cdef Py_ssize_t s
    cdef int64_t total = 0
    cdef uint64_t h
    with nogil:
        for s in range(count):
            h = _mix(key + (start + <uint64_t>s) * _GAMMA)
            if (<double>(h >> 11)) * _INV53 < mean:
                total += 1
    return total


def replay_tables(flat_table, offsets, int K, int T, int arm, int n, bint truncate,
                  int64_t lo=0, hi=None):
    if hi is None:
        hi = (<object>1) << (K * T)
    cdef int64_t hi_ = hi
    cdef int64_t m = hi_ - lo
    codes = np.empty(m, dtype=np.int64)
    taus = np.empty(m, dtype=np.int32)
    cdef int64_t[::1] codes_v = codes
    cdef int32_t[::1] tau_v = taus
    cdef int64_t[::1] table = np.ascontiguousarray(flat_table, dtype=np.int64)
    cdef int64_t[::1] offs = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef int64_t counts[8]
    cdef int64_t x, h, a, ell, r
    cdef int32_t tau
    cdef int t, i
    cdef int64_t base = 2 * K
    if K > 8:
        raise ValueError("K > 8 not supported")
    with nogil:
        for x in range(lo, hi_):
            for i in range(K):
                counts[i] = 0
            h = 0
            tau = T + 1
            for t in range(T):
                a = table[offs[t] + h]
                ell = counts[a]
                r = (x >> (a * T + ell)) & 1
                if a == arm:
                    if truncate and ell >= n:
                        r = 0
                    if ell == n:
                        tau = t + 1
                counts[a] = ell + 1
                h = h * base + 2 * a + r
            codes_v[x - lo] = h
            tau_v[x - lo] = tau
    return codes, taus
