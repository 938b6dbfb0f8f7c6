"""Pure-Python/numpy reference versions of the compiled kernels.

Signatures and results must match ``_kernels.pyx`` exactly (up to round-off).
"""
import numpy as np


def p1_element_stiffness(coords, elements, elem_coeff):
    """Per-element P1 gradient-gradient matrices scaled by ``elem_coeff``.

    coords (n, d), elements (ne, d+1) int64, elem_coeff (ne,) -> (ne, d+1, d+1).
    """
    coords = np.asarray(coords, dtype=float)
    elements = np.asarray(elements, dtype=np.int64)
    c = np.asarray(elem_coeff, dtype=float)
    if coords.shape[1] == 1:
        x = coords[elements, 0]
        le = x[:, 1] - x[:, 0]
        if np.any(le <= 0):
            raise ValueError("degenerate or inverted 1D element")
        k = c / le
        out = np.empty((len(c), 2, 2))
        out[:, 0, 0] = k
        out[:, 1, 1] = k
        out[:, 0, 1] = -k
        out[:, 1, 0] = -k
        return out
    p = coords[elements]  # (ne, 3, 2)
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    g = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    twice_area = b[:, 0] * g[:, 1] - b[:, 1] * g[:, 0]
    if np.any(twice_area <= 0):
        raise ValueError("degenerate or inverted triangle")
    scale = c / (2.0 * twice_area)
    return scale[:, None, None] * (b[:, :, None] * b[:, None, :] + g[:, :, None] * g[:, None, :])


def sg_block_matvec(indptr, indices, data, ti, tj, tk, tv, X):
    """Y[k] = sum over triples (i, j, k, g) of g * A_i @ X[j].

    All A_i share the CSR pattern (indptr, indices); data has shape
    (n_terms, nnz); X has shape (n_blocks, n).
    """
    import scipy.sparse as sp

    n = len(indptr) - 1
    X = np.asarray(X, dtype=float)
    Y = np.zeros_like(X)
    ti = np.asarray(ti)
    nb = X.shape[0]
    for i in np.unique(ti):
        sel = ti == i
        Gi = np.zeros((nb, nb))
        np.add.at(Gi, (tj[sel], tk[sel]), tv[sel])
        A = sp.csr_matrix((data[i], indices, indptr), shape=(n, n))
        Y += ((A @ X.T) @ Gi).T
    return Y
