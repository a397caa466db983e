"""numpy/scipy implementations of the kernels in ``_native.pyx``.

Same signatures and semantics; ``n_threads`` is accepted and ignored.
"""

import numpy as np
import scipy.sparse as sp


def gram_rows(cptr, cidx, cval, rptr, ridx, rval, start, stop, out, n_threads=1):
    n_users = len(rptr) - 1
    n_items = out.shape[1]
    csc = sp.csc_matrix((cval, cidx, cptr), shape=(n_users, len(cptr) - 1))
    csr = sp.csr_matrix((rval, ridx, rptr), shape=(n_users, n_items))
    block = (csc[:, start:stop].T.tocsr() @ csr).toarray()
    out += block


def hadamard_power_inplace(a, s, n_threads=1):
    bad = int(np.count_nonzero(~(a >= 0.0)))
    if bad:
        return bad
    if s != 1.0:
        np.power(a, s, out=a)
    return 0


def csr_dense_matmul(indptr, indices, data, dense, out, n_threads=1):
    m = sp.csr_matrix((data, indices, indptr), shape=(out.shape[0], dense.shape[0]))
    out += m @ dense


def topk_masked(scores, seen_ptr, seen_idx, out_idx, work, n_threads=1):
    n_rows, n = scores.shape
    k = out_idx.shape[1]
    nan_mask = np.isnan(scores)
    nan_count = int(np.count_nonzero(nan_mask))
    masked = np.array(scores, dtype=np.float64)
    masked[nan_mask] = -np.inf
    rows = np.repeat(np.arange(n_rows), np.diff(seen_ptr))
    masked[rows, seen_idx] = -np.inf
    available = n - np.bincount(rows, minlength=n_rows) - nan_mask.sum(axis=1)
    # stable sort of the negation: equal scores stay in ascending index order
    order = np.argsort(-masked, axis=1, kind="stable")[:, :k]
    for row in range(n_rows):
        take = min(k, int(available[row]))
        out_idx[row, :take] = order[row, :take]
        work[row, :take] = scores[row, order[row, :take]]
    return nan_count
