# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the batch-hard triplet kernels.

Fuses pairwise distances, hardest-pair mining and the subgradient
accumulation into single C passes. Compiled with -O2 only (no fast-math)
and fixed ascending-index reduction order, so results are deterministic.
"""

from libc.math cimport sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


def batch_hard_mine(double[:, ::1] dist, long long[::1] labels):
    """Per-anchor hardest positive / hardest negative indices.

    Positive pool excludes the anchor itself; ties resolve to the first
    index in scan order (strict comparisons). Anchors with an empty pool
    get index -1.
    """
    cdef Py_ssize_t n = dist.shape[0]
    hp_arr = np.empty(n, dtype=np.int64)
    hn_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] hp = hp_arr
    cdef long long[::1] hn = hn_arr
    cdef Py_ssize_t i, j
    cdef double best_p, best_n, dij
    cdef long long bp, bn_idx
    with nogil:
        for i in range(n):
            best_p = -1.0
            best_n = 0.0
            bp = -1
            bn_idx = -1
            for j in range(n):
                dij = dist[i, j]
                if labels[j] == labels[i]:
                    if j != i and (bp < 0 or dij > best_p):
                        best_p = dij
                        bp = j
                else:
                    if bn_idx < 0 or dij < best_n:
                        best_n = dij
                        bn_idx = j
            hp[i] = bp
            hn[i] = bn_idx
    return hp_arr, hn_arr


def batch_hard_triplet_core(double[:, ::1] emb, long long[::1] labels,
                            double margin):
    """Fused batch-hard triplet pass.

    Returns (mean loss, gradient wrt embeddings, hardest-pos distances,
    hardest-neg distances, hardest-pos indices, hardest-neg indices).
    Distances use the norm expansion clamped at 0 before the square root;
    gradients flow only through strictly active anchors' selected pairs,
    skipping zero-distance pairs. Callers validate the batch.
    """
    cdef Py_ssize_t n = emb.shape[0], d = emb.shape[1]
    dist_arr = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] dist = dist_arr
    sq_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] sq = sq_arr
    hp_arr = np.empty(n, dtype=np.int64)
    hn_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] hp = hp_arr
    cdef long long[::1] hn = hn_arr
    dap_arr = np.empty(n, dtype=np.float64)
    dan_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] dap = dap_arr
    cdef double[::1] dan = dan_arr
    grad_arr = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr

    cdef Py_ssize_t i, j, k
    cdef double acc, v, dij, best_p, best_n, hinge, inv, diff
    cdef double total = 0.0
    cdef long long bp, bn_idx

    with nogil:
        for i in range(n):
            acc = 0.0
            for k in range(d):
                acc += emb[i, k] * emb[i, k]
            sq[i] = acc
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for k in range(d):
                    acc += emb[i, k] * emb[j, k]
                v = sq[i] + sq[j] - 2.0 * acc
                dist[i, j] = sqrt(v) if v > 0.0 else 0.0

        for i in range(n):
            best_p = -1.0
            best_n = 0.0
            bp = -1
            bn_idx = -1
            for j in range(n):
                dij = dist[i, j]
                if labels[j] == labels[i]:
                    if j != i and (bp < 0 or dij > best_p):
                        best_p = dij
                        bp = j
                else:
                    if bn_idx < 0 or dij < best_n:
                        best_n = dij
                        bn_idx = j
            hp[i] = bp
            hn[i] = bn_idx
            dap[i] = best_p
            dan[i] = best_n

        for i in range(n):
            hinge = margin + dap[i] - dan[i]
            if hinge > 0.0:
                total += hinge
                if dap[i] > 0.0:
                    bp = hp[i]
                    inv = 1.0 / dap[i]
                    for k in range(d):
                        diff = (emb[i, k] - emb[bp, k]) * inv
                        grad[i, k] += diff
                        grad[bp, k] -= diff
                if dan[i] > 0.0:
                    bn_idx = hn[i]
                    inv = 1.0 / dan[i]
                    for k in range(d):
                        diff = (emb[i, k] - emb[bn_idx, k]) * inv
                        grad[i, k] -= diff
                        grad[bn_idx, k] += diff
        for i in range(n):
            for k in range(d):
                grad[i, k] /= n

    return total / n, grad_arr, dap_arr, dan_arr, hp_arr, hn_arr
