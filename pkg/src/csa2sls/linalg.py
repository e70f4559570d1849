"""Dense linear-algebra helpers: rank-aware thin QR and SPD solves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular

from .errors import SingularMatrixError

DEFAULT_RANK_TOL = 1e-10
# Smallest admissible squared Cholesky pivot of the unit-diagonal rescaled matrix.
PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class QrFactor:
    Q: np.ndarray
    R: np.ndarray
    rank: int
    col_tol: float

    @property
    def full_rank(self) -> bool:
        return self.rank == self.R.shape[0]

    def deficient_column(self) -> int | None:
        """Index of the first column whose R diagonal falls below tolerance."""
        diag = np.abs(np.diag(self.R))
        small = np.flatnonzero(diag <= self.col_tol * diag.max(initial=0.0))
        return int(small[0]) if small.size else None


def diag_rank(R_diag, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    diag = np.abs(R_diag)
    top = diag.max(initial=0.0)
    if top == 0.0:
        return 0
    return int(np.count_nonzero(diag > rel_tol * top))


def thin_qr(A, rel_tol: float = DEFAULT_RANK_TOL) -> QrFactor:
    """Reduced QR of an ``N x p`` matrix with diagonal-based rank detection.

    The rank is the number of ``|R_jj|`` exceeding ``rel_tol * max|R_jj|``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {A.shape}")
    n, p = A.shape
    if p < 1 or n < p:
        raise ValueError(f"thin_qr needs N >= p >= 1, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("thin_qr input contains non-finite entries")
    Q, R = np.linalg.qr(A, mode="reduced")
    return QrFactor(Q=Q, R=R, rank=diag_rank(np.diag(R), rel_tol), col_tol=rel_tol)


def lstsq_qr(A, b, rel_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Least-squares solution via thin QR; raises on rank deficiency."""
    f = thin_qr(A, rel_tol)
    if not f.full_rank:
        j = f.deficient_column()
        raise SingularMatrixError(f"design matrix is rank deficient at column {j}", index=j)
    return solve_triangular(f.R, f.Q.T @ np.asarray(b, dtype=float))


def spd_solve(A, B) -> np.ndarray:
    """Solve ``A X = B`` for symmetric positive definite ``A`` via Cholesky.

    ``A`` is rescaled to unit diagonal first so the positivity check does not
    depend on column units. Never regularizes: a non-positive or negligible
    pivot raises :class:`SingularMatrixError` carrying its index.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"spd_solve needs a square matrix, got {A.shape}")
    scale_ref = np.abs(A).max(initial=0.0)
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-10 * max(scale_ref, 1e-300)):
        raise ValueError("spd_solve: matrix is not symmetric")

    diag = np.diag(A)
    bad = np.flatnonzero(~(diag > 0.0))
    if bad.size:
        raise SingularMatrixError(f"matrix is not positive definite (pivot {bad[0]})", index=int(bad[0]))
    s = 1.0 / np.sqrt(diag)
    As = A * s[:, None] * s[None, :]
    As = 0.5 * (As + As.T)
    L, info = lapack.dpotrf(As, lower=1, clean=1)
    if info > 0:
        raise SingularMatrixError(f"matrix is not positive definite (pivot {info - 1})", index=info - 1)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    pivots = np.diag(L) ** 2
    small = np.flatnonzero(pivots < PIVOT_TOL)
    if small.size:
        j = int(small[0])
        raise SingularMatrixError(f"matrix is numerically singular (pivot {j})", index=j)

    Bs = B * s.reshape((-1,) + (1,) * (B.ndim - 1))
    Xs = cho_solve((L, True), Bs)
    return Xs * s.reshape((-1,) + (1,) * (B.ndim - 1))


def spd_inverse(A) -> np.ndarray:
    out = spd_solve(A, np.eye(np.asarray(A).shape[0]))
    return 0.5 * (out + out.T)
