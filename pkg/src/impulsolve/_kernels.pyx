# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: backward sweeps, child expectations, path sampling.

Statement-for-statement mirror of _kernels_py.py; both backends must be
bit-identical, which is why setup.py compiles this with contraction off and
without fast-math.  Only adds, multiplies and compares happen here; all
exp/log evaluation stays in the shared Python orchestration code.
"""

import numpy as np


def expect_children(long long[::1] ptr, long long[::1] idx, double[::1] prob,
                    double[::1] src, double[::1] out):
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t v, e
    cdef long long lo, hi
    cdef double acc
    for v in range(n):
        lo = ptr[v]
        hi = ptr[v + 1]
        acc = 0.0
        for e in range(lo, hi):
            acc += prob[e] * src[idx[e]]
        out[v] = acc


def expect_children_add(long long[::1] ptr, long long[::1] idx, double[::1] prob,
                        double[::1] addend, double[::1] src, double[::1] out):
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t v, e
    cdef long long lo, hi, c
    cdef double acc
    for v in range(n):
        lo = ptr[v]
        hi = ptr[v + 1]
        acc = 0.0
        for e in range(lo, hi):
            c = idx[e]
            acc += prob[e] * (addend[c] + src[c])
        out[v] = acc


def expect_children_mul(long long[::1] ptr, long long[::1] idx, double[::1] prob,
                        double[::1] factor, double[::1] src, double[::1] out):
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t v, e
    cdef long long lo, hi, c
    cdef double acc
    for v in range(n):
        lo = ptr[v]
        hi = ptr[v + 1]
        acc = 0.0
        for e in range(lo, hi):
            c = idx[e]
            acc += prob[e] * (factor[c] * src[c])
        out[v] = acc


def sweep_max_add(long long[::1] ptr, long long[::1] idx, double[::1] prob,
                  double[::1] pay, double[::1] obst, double leaf_cont,
                  double[::1] out):
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t v, e
    cdef long long lo, hi
    cdef double cont, o
    for v in range(n - 1, -1, -1):
        lo = ptr[v]
        hi = ptr[v + 1]
        if lo == hi:
            cont = leaf_cont
        else:
            cont = 0.0
            for e in range(lo, hi):
                cont += prob[e] * out[idx[e]]
        o = obst[v]
        out[v] = pay[v] + (cont if cont >= o else o)


def sweep_max_mul(long long[::1] ptr, long long[::1] idx, double[::1] prob,
                  double[::1] fac, double[::1] obst, double leaf_cont,
                  double[::1] out):
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t v, e
    cdef long long lo, hi
    cdef double cont, o
    for v in range(n - 1, -1, -1):
        lo = ptr[v]
        hi = ptr[v + 1]
        if lo == hi:
            cont = leaf_cont
        else:
            cont = 0.0
            for e in range(lo, hi):
                cont += prob[e] * out[idx[e]]
        o = obst[v]
        out[v] = fac[v] * (cont if cont >= o else o)


cdef inline unsigned long long _mix64(unsigned long long z) nogil:
    z ^= z >> 30
    z = z * <unsigned long long>0xBF58476D1CE4E5B9
    z ^= z >> 27
    z = z * <unsigned long long>0x94D049BB133111EB
    z ^= z >> 31
    return z


def sample_leaf_counts(long long[::1] ptr, long long[::1] idx, double[::1] thr,
                       long long root, long long depth, unsigned long long seed,
                       long long n_samples, long long[::1] counts):
    """Counter-based splitmix64 path sampling; see _kernels_py for the scheme."""
    cdef long long i, t
    cdef long long v, lo, hi, e, chosen
    cdef unsigned long long k, z
    cdef double u
    cdef unsigned long long golden = <unsigned long long>0x9E3779B97F4A7C15
    cdef double inv = 1.0 / 18446744073709551616.0
    for i in range(n_samples):
        v = root
        for t in range(depth):
            k = (<unsigned long long>i) * (<unsigned long long>depth) + (<unsigned long long>t) + 1
            z = _mix64(seed + k * golden)
            u = (<double>z) * inv
            lo = ptr[v]
            hi = ptr[v + 1]
            chosen = hi - 1
            for e in range(lo, hi):
                if u < thr[e]:
                    chosen = e
                    break
            v = idx[chosen]
        counts[v] += 1
