# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""OpenMP kernels for graph construction, filtering and ranking.

Each output row is owned by exactly one thread and accumulated in a fixed
order, so results do not depend on the thread count.
"""

from cython.parallel cimport prange
from libc.math cimport isnan
from libc.stdint cimport int64_t

import numpy as np

ctypedef fused floating:
    float
    double


cdef int _valid_compressed(const int64_t[::1] ptr, const int64_t[::1] idx,
                           Py_ssize_t n_major, Py_ssize_t n_minor) noexcept nogil:
    """1 if (ptr, idx) is a well-formed compressed matrix with n_major rows of width n_minor."""
    cdef Py_ssize_t r, p
    if ptr.shape[0] != n_major + 1 or ptr[0] != 0 or ptr[n_major] > idx.shape[0]:
        return 0
    for r in range(n_major):
        if ptr[r + 1] < ptr[r]:
            return 0
    for p in range(ptr[n_major]):
        if idx[p] < 0 or idx[p] >= n_minor:
            return 0
    return 1


def gram_rows(const int64_t[::1] cptr, const int64_t[::1] cidx, const double[::1] cval,
              const int64_t[::1] rptr, const int64_t[::1] ridx, const double[::1] rval,
              Py_ssize_t start, Py_ssize_t stop, double[:, ::1] out, int n_threads=1):
    """Rows ``start:stop`` of ``X.T @ X`` added into zeroed ``out``.

    ``X`` is passed twice: column-compressed (``c*``) and row-compressed (``r*``).
    """
    cdef Py_ssize_t i, p, q, u, row
    cdef double a
    cdef Py_ssize_t n_items = cptr.shape[0] - 1, n_users = rptr.shape[0] - 1
    if not (0 <= start <= stop <= n_items and out.shape[0] >= stop - start and out.shape[1] == n_items
            and _valid_compressed(cptr, cidx, n_items, n_users) and _valid_compressed(rptr, ridx, n_users, n_items)
            and cval.shape[0] >= cptr[n_items] and rval.shape[0] >= rptr[n_users]):
        raise ValueError("gram_rows: operands do not describe one matrix and a matching output block")
    with nogil:
        for i in prange(start, stop, num_threads=n_threads, schedule="dynamic"):
            row = i - start
            for p in range(cptr[i], cptr[i + 1]):
                u = cidx[p]
                a = cval[p]
                for q in range(rptr[u], rptr[u + 1]):
                    out[row, ridx[q]] += a * rval[q]


def hadamard_power_inplace(double[:, ::1] a, double s, int n_threads=1):
    """Raise every entry to ``s`` in place; returns the count of negative/NaN entries.

    The domain scan runs here in parallel. If it finds a bad entry nothing is
    modified; otherwise the exponentiation goes to numpy's vectorized power,
    which beats a scalar libm ``pow`` loop and keeps both backends bit-identical.
    """
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    cdef Py_ssize_t bad = 0
    with nogil:
        for i in prange(n, num_threads=n_threads, schedule="static"):
            for j in range(m):
                if not (a[i, j] >= 0.0):
                    bad += 1
    if bad == 0 and s != 1.0:
        arr = np.asarray(a)
        np.power(arr, s, out=arr)
    return bad


def csr_dense_matmul(const int64_t[::1] indptr, const int64_t[::1] indices,
                     const floating[::1] data, const floating[:, ::1] dense,
                     floating[:, ::1] out, int n_threads=1):
    """``out += S @ dense`` for a CSR matrix ``S``."""
    cdef Py_ssize_t u, p, i, j
    cdef Py_ssize_t m = dense.shape[1]
    cdef floating r
    if not (out.shape[1] == m and _valid_compressed(indptr, indices, out.shape[0], dense.shape[0])
            and data.shape[0] >= indptr[out.shape[0]]):
        raise ValueError("csr_dense_matmul: operand shapes do not match")
    with nogil:
        for u in prange(out.shape[0], num_threads=n_threads, schedule="dynamic"):
            for p in range(indptr[u], indptr[u + 1]):
                i = indices[p]
                r = data[p]
                for j in range(m):
                    out[u, j] += r * dense[i, j]


def topk_masked(const floating[:, ::1] scores, const int64_t[::1] seen_ptr,
                const int64_t[::1] seen_idx, int64_t[:, ::1] out_idx,
                floating[:, ::1] work, int n_threads=1):
    """Top-k unseen items per row, descending score, ties by ascending index.

    ``seen_idx`` must be sorted within each row. ``out_idx`` is prefilled with -1
    and has k columns; ``work`` is scratch of the same shape. Returns the number
    of NaN scores met (the caller raises).
    """
    cdef Py_ssize_t n_rows = scores.shape[0], n = scores.shape[1]
    cdef Py_ssize_t k = out_idx.shape[1]
    cdef Py_ssize_t row, j, p, end, filled, pos
    cdef Py_ssize_t nan_count = 0
    cdef floating x
    if not (out_idx.shape[0] == n_rows and work.shape[0] == n_rows and work.shape[1] == k
            and _valid_compressed(seen_ptr, seen_idx, n_rows, n)):
        raise ValueError("topk_masked: operand shapes do not match")
    with nogil:
        for row in prange(n_rows, num_threads=n_threads, schedule="dynamic"):
            p = seen_ptr[row]
            end = seen_ptr[row + 1]
            filled = 0
            for j in range(n):
                while p < end and seen_idx[p] < j:
                    p = p + 1
                if p < end and seen_idx[p] == j:
                    continue
                x = scores[row, j]
                if isnan(x):
                    nan_count += 1
                    continue
                if filled == k and not (x > work[row, k - 1]):
                    continue
                # strict comparison keeps earlier (smaller) indices ahead on ties
                pos = filled if filled < k else k - 1
                while pos > 0 and x > work[row, pos - 1]:
                    work[row, pos] = work[row, pos - 1]
                    out_idx[row, pos] = out_idx[row, pos - 1]
                    pos = pos - 1
                work[row, pos] = x
                out_idx[row, pos] = j
                if filled < k:
                    filled = filled + 1
    return nan_count
