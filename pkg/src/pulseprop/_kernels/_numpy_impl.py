"""Fallback kernels built from numpy/scipy primitives.

Matches the compiled backend: Euclidean distances through the Gram-matrix
expansion ``|q|^2 + |r|^2 - 2 q.r`` and neighbor ties broken toward the
lower reference index.
"""

import numpy as np
import scipy.sparse as sp

BACKEND = "numpy"

# rows of the query block processed per Gram product, bounds peak memory
_BLOCK = 512


def topk_neighbors(queries, refs, k, exclude_self=False):
    """Indices of the k nearest reference rows for each query row.

    Parameters
    ----------
    queries : (nq, d) array
    refs : (nr, d) array
    k : int
    exclude_self : bool
        When true, queries and refs are the same matrix and row i must not
        report itself as a neighbor.

    Returns
    -------
    (nq, k) int64 array, each row sorted by ascending distance with ties
    resolved toward the lower reference index.
    """
    q = np.ascontiguousarray(queries, dtype=np.float64)
    r = np.ascontiguousarray(refs, dtype=np.float64)
    nq, nr = q.shape[0], r.shape[0]
    if q.shape[1] != r.shape[1]:
        raise ValueError("query/reference dimensionality mismatch")
    available = nr - 1 if exclude_self else nr
    if not 1 <= k <= available:
        raise ValueError(f"k={k} outside [1, {available}]")
    q_sq = np.einsum("ij,ij->i", q, q)
    r_sq = np.einsum("ij,ij->i", r, r)
    out = np.empty((nq, k), dtype=np.int64)
    for start in range(0, nq, _BLOCK):
        stop = min(start + _BLOCK, nq)
        dists = q_sq[start:stop, None] + r_sq[None, :] - 2.0 * (q[start:stop] @ r.T)
        if exclude_self:
            dists[np.arange(stop - start), np.arange(start, stop)] = np.inf
        # stable sort keeps the lower index first among equal distances
        order = np.argsort(dists, axis=1, kind="stable")
        out[start:stop] = order[:, :k]
    return out


def propagate_csr(indptr, indices, data, y0, clamp, labeled_mask, tol, max_iter):
    """Clamped power iteration ``Y <- T Y`` over a CSR transition matrix.

    Labeled rows are reset to their one-hot values after every product.
    Convergence is the max-abs change over unlabeled rows.

    Returns (Y, iterations_used, converged).
    """
    n = y0.shape[0]
    t = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    y = np.array(y0, dtype=np.float64)
    labeled = np.asarray(labeled_mask, dtype=bool)
    unlabeled = ~labeled
    if not unlabeled.any():
        return y, 0, True
    for it in range(1, int(max_iter) + 1):
        y_next = t @ y
        y_next[labeled] = clamp[labeled]
        delta = np.max(np.abs(y_next[unlabeled] - y[unlabeled]))
        y = y_next
        if delta < tol:
            return y, it, True
    return y, int(max_iter), False
