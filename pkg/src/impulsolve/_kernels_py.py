"""Pure-Python twin of the compiled kernels in _kernels.pyx.

The value kernels mirror the Cython loops statement for statement; the
accumulation order written here *is* the contract, and both backends must
produce bit-identical results (tests/test_backends.py enforces that).  The
Monte Carlo sampler is vectorised with numpy instead of looping, but follows
the documented counter-based stream exactly, draw for draw, so its integer
counts are identical too.

Array conventions (see scenario.TreeArrays): node indices ascend in time, a
node's edges occupy ptr[v]:ptr[v+1] in child order, thr holds the running
partial sums of child probabilities.
"""

import numpy as np

_MIX_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_MUL2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_INV_2_64 = 1.0 / 18446744073709551616.0


def expect_children(ptr, idx, prob, src, out):
    """out[v] = sum over v's edges of prob * src[child]; leaves get 0."""
    n = out.shape[0]
    for v in range(n):
        lo = ptr[v]
        hi = ptr[v + 1]
        acc = 0.0
        for e in range(lo, hi):
            acc += prob[e] * src[idx[e]]
        out[v] = acc


def expect_children_add(ptr, idx, prob, addend, src, out):
    """out[v] = sum over v's edges of prob * (addend[child] + src[child])."""
    n = out.shape[0]
    for v in range(n):
        lo = ptr[v]
        hi = ptr[v + 1]
        acc = 0.0
        for e in range(lo, hi):
            c = idx[e]
            acc += prob[e] * (addend[c] + src[c])
        out[v] = acc


def expect_children_mul(ptr, idx, prob, factor, src, out):
    """out[v] = sum over v's edges of prob * (factor[child] * src[child])."""
    n = out.shape[0]
    for v in range(n):
        lo = ptr[v]
        hi = ptr[v + 1]
        acc = 0.0
        for e in range(lo, hi):
            c = idx[e]
            acc += prob[e] * (factor[c] * src[c])
        out[v] = acc


def sweep_max_add(ptr, idx, prob, pay, obst, leaf_cont, out):
    """Backward pass out[v] = pay[v] + max(continuation, obst[v]).

    Continuation is the probability-weighted sum of the children's already
    computed values, or `leaf_cont` at a leaf.  Relies on indices ascending
    in time.
    """
    n = out.shape[0]
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


def sweep_max_mul(ptr, idx, prob, fac, obst, leaf_cont, out):
    """Backward pass out[v] = fac[v] * max(continuation, obst[v])."""
    n = out.shape[0]
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


def _mix_vec(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX_MUL1
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX_MUL2
    z = z ^ (z >> np.uint64(31))
    return z


def sample_leaf_counts(ptr, idx, thr, root, depth, seed, n_samples, counts):
    """Walk `n_samples` root-to-leaf paths, incrementing counts at the leaves.

    Sample i at step t consumes stream counter i*depth + t + 1; the child is
    the first edge whose threshold exceeds the uniform, else the last edge.
    """
    if n_samples <= 0:
        return
    width = int(np.max(ptr[1:] - ptr[:-1])) if ptr.shape[0] > 1 else 0
    cur = np.full(n_samples, root, dtype=np.int64)
    base = np.arange(n_samples, dtype=np.uint64) * np.uint64(depth)
    n_edges = thr.shape[0]
    for t in range(depth):
        z = np.uint64(seed) + (base + np.uint64(t + 1)) * _GOLDEN
        u = _mix_vec(z).astype(np.float64) * _INV_2_64
        lo = ptr[cur]
        hi = ptr[cur + 1]
        chosen = hi - 1  # fall through to the last edge
        done = np.zeros(n_samples, dtype=bool)
        for j in range(width):
            e = lo + j
            valid = e < hi
            hit = valid & ~done & (u < thr[np.minimum(e, n_edges - 1)])
            chosen[hit] = e[hit]
            done |= hit
        cur = idx[chosen]
    np.add.at(counts, cur, 1)
