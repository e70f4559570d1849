"""Hot loop: orthonormal bases for every subset model.

Two interchangeable backends produce identical outputs:

* a numba ``@njit`` loop that gathers each instrument block and factors it
  in place (default when numba imports);
* a pure-numpy path that stacks all blocks and calls batched
  ``np.linalg.qr`` once.

Set ``CSA2SLS_DISABLE_NUMBA=1`` to force the numpy path. ``BACKEND`` reports
the active choice; ``subset_bases(..., backend=...)`` overrides it per call.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

_DISABLED = os.environ.get("CSA2SLS_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    if not _DISABLED:
        warnings.warn("numba could not be imported; using the numpy kernels")

BACKEND = "numba" if HAVE_NUMBA and not _DISABLED else "numpy"


def _subset_bases_numpy(Z, W, subsets, rel_tol):
    n = Z.shape[0]
    M, k = subsets.shape
    q = W.shape[1]
    p = k + q
    stack = np.empty((M, n, p))
    stack[:, :, :k] = np.moveaxis(Z[:, subsets], 1, 0)
    stack[:, :, k:] = W
    Q, R = np.linalg.qr(stack, mode="reduced")
    diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
    top = diag.max(axis=1)
    ok = (top > 0.0) & np.all(diag > rel_tol * top[:, None], axis=1)
    B = np.ascontiguousarray(np.moveaxis(Q[ok], 0, 1).reshape(n, -1))
    return B, ok


if HAVE_NUMBA:

    @njit(cache=True)
    def _subset_bases_numba(Z, W, subsets, rel_tol):
        n = Z.shape[0]
        M, k = subsets.shape
        q = W.shape[1]
        p = k + q
        B = np.empty((n, M * p))
        ok = np.zeros(M, dtype=np.bool_)
        block = np.empty((n, p))
        used = 0
        for m in range(M):
            for j in range(k):
                col = subsets[m, j]
                for i in range(n):
                    block[i, j] = Z[i, col]
            for j in range(q):
                for i in range(n):
                    block[i, k + j] = W[i, j]
            Q, R = np.linalg.qr(block)
            top = 0.0
            for j in range(p):
                top = max(top, abs(R[j, j]))
            full = top > 0.0
            for j in range(p):
                if abs(R[j, j]) <= rel_tol * top:
                    full = False
            if full:
                base = used * p
                for j in range(p):
                    for i in range(n):
                        B[i, base + j] = Q[i, j]
                ok[m] = True
                used += 1
        return B[:, : used * p].copy(), ok

else:  # pragma: no cover
    _subset_bases_numba = None


def subset_bases(Z, W, subsets, rel_tol, backend=None):
    """Stacked thin-QR bases ``[Q_1 | Q_2 | ...]`` of the full-rank subset models.

    Model m uses instruments ``[Z[:, subsets[m]] | W]``. Returns the
    ``N x (M_used * p)`` basis matrix (models in ascending index order) and a
    boolean mask of which models were full rank.
    """
    backend = backend or BACKEND
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    subsets = np.ascontiguousarray(subsets, dtype=np.int64)
    if subsets.ndim != 2 or subsets.shape[0] == 0:
        raise ValueError("subsets must be a non-empty 2-D index array")
    if subsets.shape[1] + W.shape[1] > Z.shape[0]:
        raise ValueError(
            f"each model has {subsets.shape[1] + W.shape[1]} instruments but only {Z.shape[0]} observations"
        )
    if backend == "numba":
        if _subset_bases_numba is None:
            raise RuntimeError("numba backend requested but numba is unavailable")
        return _subset_bases_numba(Z, W, subsets, float(rel_tol))
    if backend == "numpy":
        return _subset_bases_numpy(Z, W, subsets, float(rel_tol))
    raise ValueError(f"unknown kernel backend {backend!r}")


def frobenius_gram_sq(B, chunk: int = 2048) -> float:
    """``||B' B||_F^2`` computed in column blocks so the Gram never fully materializes."""
    total = 0.0
    for start in range(0, B.shape[1], chunk):
        G = B[:, start:start + chunk].T @ B
        total += float(np.einsum("ij,ij->", G, G))
    return total
