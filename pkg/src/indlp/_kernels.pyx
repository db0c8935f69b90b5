# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled walk and skip-gram kernels; mirrors ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p
from libc.stdlib cimport malloc, free

cnp.import_array()

IMPLEMENTATION = "cython"


cdef inline bint _has_edge(const cnp.int64_t[:] indptr, const cnp.int64_t[:] targets,
                           cnp.int64_t src, cnp.int64_t dst) noexcept nogil:
    cdef cnp.int64_t lo = indptr[src], hi = indptr[src + 1], mid
    cdef cnp.int64_t end = hi
    while lo < hi:
        mid = (lo + hi) // 2
        if targets[mid] < dst:
            lo = mid + 1
        else:
            hi = mid
    return lo < end and targets[lo] == dst


def walk_kernel(const cnp.int64_t[:] indptr, const cnp.int64_t[:] targets,
                const double[:] weights, const cnp.int64_t[:] starts,
                const double[:, :] uniforms, Py_ssize_t walk_length,
                double p, double q, cnp.int64_t[:, :] out):
    cdef Py_ssize_t n_walks = starts.shape[0]
    lengths_arr = np.zeros(n_walks, dtype=np.int64)
    cdef cnp.int64_t[:] lengths = lengths_arr
    cdef double inv_p = 1.0 / p, inv_q = 1.0 / q
    cdef Py_ssize_t i, n, k, lo, hi, choice, max_deg = 0
    cdef cnp.int64_t cur, prev, u
    cdef double total, w, threshold, acc
    cdef double* probs
    for k in range(indptr.shape[0] - 1):
        if indptr[k + 1] - indptr[k] > max_deg:
            max_deg = indptr[k + 1] - indptr[k]
    probs = <double*> malloc((max_deg + 1) * sizeof(double))
    if probs == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n_walks):
                cur = starts[i]
                out[i, 0] = cur
                n = 1
                prev = -1
                while n < walk_length:
                    lo = indptr[cur]
                    hi = indptr[cur + 1]
                    if lo == hi:
                        break
                    total = 0.0
                    for k in range(lo, hi):
                        u = targets[k]
                        w = weights[k]
                        if prev >= 0:
                            if u == prev:
                                w = w * inv_p
                            elif not _has_edge(indptr, targets, prev, u):
                                w = w * inv_q
                        probs[k - lo] = w
                        total += w
                    threshold = uniforms[i, n - 1] * total
                    acc = 0.0
                    choice = hi - 1
                    for k in range(lo, hi):
                        acc += probs[k - lo]
                        if threshold < acc:
                            choice = k
                            break
                    prev = cur
                    cur = targets[choice]
                    out[i, n] = cur
                    n += 1
                lengths[i] = n
    finally:
        free(probs)
    return lengths_arr


cdef inline double _log_sigmoid(double x) noexcept nogil:
    if x >= 0:
        return -log1p(exp(-x))
    return x - log1p(exp(x))


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def sgns_kernel(const cnp.int64_t[:] flat, const cnp.int64_t[:] offsets,
                Py_ssize_t walk_lo, Py_ssize_t walk_hi, Py_ssize_t window,
                double[:, :] center, double[:, :] context,
                const cnp.int64_t[:] negatives, const cnp.int64_t[:] neg_start,
                Py_ssize_t n_neg, const double[:] lrs):
    cdef Py_ssize_t dim = center.shape[1]
    cdef double loss = 0.0
    cdef long long pairs = 0
    cdef Py_ssize_t w, a, length, i, j, k, c, ni, jlo, jhi
    cdef cnp.int64_t u, v, target
    cdef double lr, label, f, g
    cdef double* grad_u = <double*> malloc((dim + 1) * sizeof(double))
    if grad_u == NULL:
        raise MemoryError()
    try:
        with nogil:
            for w in range(walk_lo, walk_hi):
                a = offsets[w]
                length = offsets[w + 1] - a
                lr = lrs[w]
                ni = neg_start[w]
                for i in range(length):
                    u = flat[a + i]
                    jlo = i - window
                    if jlo < 0:
                        jlo = 0
                    jhi = i + window + 1
                    if jhi > length:
                        jhi = length
                    for j in range(jlo, jhi):
                        if j == i:
                            continue
                        v = flat[a + j]
                        for c in range(dim):
                            grad_u[c] = 0.0
                        for k in range(n_neg + 1):
                            if k == 0:
                                target = v
                                label = 1.0
                            else:
                                target = negatives[ni]
                                label = 0.0
                                ni += 1
                                if target == v:
                                    continue
                            f = 0.0
                            for c in range(dim):
                                f += center[u, c] * context[target, c]
                            if label > 0:
                                loss -= _log_sigmoid(f)
                            else:
                                loss -= _log_sigmoid(-f)
                            g = (label - _sigmoid(f)) * lr
                            for c in range(dim):
                                grad_u[c] += g * context[target, c]
                            for c in range(dim):
                                context[target, c] += g * center[u, c]
                        for c in range(dim):
                            center[u, c] += grad_u[c]
                        pairs += 1
    finally:
        free(grad_u)
    return loss, pairs
