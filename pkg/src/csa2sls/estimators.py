"""OLS, 2SLS and the complete-subset-averaged 2SLS estimator at a fixed k."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps
from scipy.linalg import solve_triangular

from . import _kernels
from .dataframe import ModelFrame
from .errors import EstimationError, SingularMatrixError
from .linalg import DEFAULT_RANK_TOL, spd_inverse, spd_solve, thin_qr
from .subsets import DEFAULT_R, DEFAULT_SEED, SubsetPlan, build_subset_plan

Z_CRIT = 1.959964
# Above this sample size the N x N averaged projector is never formed.
STREAMING_THRESHOLD = 2000


@dataclass(frozen=True)
class ProjectionStats:
    """Averaged first-stage quantities for one subset size.

    With ``P`` the mean of the per-model projectors: ``Xhat = P X``,
    ``XtPX = X'P X``, ``XhatTXhat = X'P^2 X``, ``XtPy = X'P y`` and
    ``trP2 = tr(P^2)``.
    """

    k: int
    Xhat: np.ndarray
    XtPX: np.ndarray
    XhatTXhat: np.ndarray
    XtPy: np.ndarray
    trP2: float
    M_used: int
    M_skipped: int
    mode: str


@dataclass
class EstimationResult:
    b: np.ndarray
    V: np.ndarray
    se: np.ndarray
    z: np.ndarray
    p: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    rmse: float
    N: int
    K: int
    estimator: str
    names: list[str] = field(default_factory=list)
    k_opt: int | None = None
    prelim_mode: str | None = None
    amse_table: object = None
    m_skipped_total: int = 0

    def coef(self, name: str) -> float:
        return float(self.b[self.names.index(name)])


def resolve_mode(frame: ModelFrame, mode: str | None = None, large: bool = False) -> str:
    if mode is not None:
        if mode not in ("dense", "streaming"):
            raise ValueError(f"unknown projection mode {mode!r}")
        return mode
    return "streaming" if large or frame.N > STREAMING_THRESHOLD else "dense"


def _inference(X, y, G, XhatTXhat, b):
    """Sandwich covariance ``s2 G^-1 (Xhat'Xhat) G^-1`` with ``s2 = e'e/N``."""
    n = X.shape[0]
    resid = y - X @ b
    s2 = float(resid @ resid) / n
    Ginv = spd_inverse(G)
    V = s2 * (Ginv @ XhatTXhat @ Ginv)
    V = 0.5 * (V + V.T)
    se = np.sqrt(np.clip(np.diag(V), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = b / se
    p = 2.0 * sps.norm.sf(np.abs(z))
    return dict(
        V=V, se=se, z=z, p=p,
        ci_low=b - Z_CRIT * se, ci_high=b + Z_CRIT * se,
        rmse=float(np.sqrt(s2)),
    )


def inference_stats(frame: ModelFrame, stats: ProjectionStats, b) -> dict:
    """Covariance, standard errors, z, two-sided normal p, 95% CI and RMSE."""
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("coefficients must be finite")
    return _inference(frame.X, frame.y, stats.XtPX, stats.XhatTXhat, b)


def ols(X, y, names=None) -> EstimationResult:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n < d:
        raise SingularMatrixError(f"OLS needs N >= d, got N={n}, d={d}")
    f = thin_qr(X, DEFAULT_RANK_TOL)
    if not f.full_rank:
        j = f.deficient_column()
        raise SingularMatrixError(f"regressor matrix is rank deficient at column {j}", index=j)
    b = solve_triangular(f.R, f.Q.T @ y)
    XtX = X.T @ X
    inf = _inference(X, y, XtX, XtX, b)
    return EstimationResult(b=b, N=n, K=0, estimator="ols", names=list(names or []), **inf)


def tsls(frame: ModelFrame) -> EstimationResult:
    """Two-stage least squares with all excluded instruments plus the included block."""
    Z = frame.Z_full
    if Z.shape[1] < frame.d:
        raise SingularMatrixError(
            f"order condition fails: {Z.shape[1]} instruments for {frame.d} regressors"
        )
    if frame.N < Z.shape[1]:
        raise SingularMatrixError(f"{Z.shape[1]} instruments but only {frame.N} observations")
    f = thin_qr(Z, DEFAULT_RANK_TOL)
    if not f.full_rank:
        j = f.deficient_column()
        raise SingularMatrixError(f"instrument matrix is rank deficient at column {j}", index=j)
    QtX = f.Q.T @ frame.X
    G = QtX.T @ QtX
    b = spd_solve(G, QtX.T @ (f.Q.T @ frame.y))
    inf = _inference(frame.X, frame.y, G, G, b)
    return EstimationResult(b=b, N=frame.N, K=frame.K, estimator="tsls", names=frame.coef_names, **inf)


def first_stage_fit(Z_m, X, rel_tol: float = DEFAULT_RANK_TOL):
    """OLS of ``X`` on one instrument block; ``ok`` is False when the block is rank deficient."""
    Z_m = np.asarray(Z_m, dtype=float)
    X = np.asarray(X, dtype=float)
    if not (np.all(np.isfinite(Z_m)) and np.all(np.isfinite(X))):
        raise ValueError("first_stage_fit input contains non-finite entries")
    f = thin_qr(Z_m, rel_tol)
    if not f.full_rank:
        return None, False
    return solve_triangular(f.R, f.Q.T @ X), True


def accumulate_projection_stats(
    frame: ModelFrame,
    plan: SubsetPlan,
    mode: str | None = None,
    rel_tol: float = DEFAULT_RANK_TOL,
    backend: str | None = None,
) -> ProjectionStats:
    if plan.K != frame.K:
        raise ValueError(f"plan built for K={plan.K} but frame has K={frame.K}")
    mode = resolve_mode(frame, mode)
    B, ok = _kernels.subset_bases(frame.Z_excl, frame.W, plan.subsets, rel_tol, backend=backend)
    m_used = int(ok.sum())
    if m_used == 0:
        raise EstimationError(f"all {plan.M} subset models with k={plan.k} are rank deficient")
    X, y = frame.X, frame.y

    if mode == "dense":
        P = (B @ B.T) / m_used
        P = 0.5 * (P + P.T)
        Xhat = P @ X
        XtPy = Xhat.T @ y
        trP2 = float(np.einsum("ij,ij->", P, P))
    else:
        BtX = B.T @ X
        Xhat = (B @ BtX) / m_used
        XtPy = BtX.T @ (B.T @ y) / m_used
        trP2 = _kernels.frobenius_gram_sq(B) / m_used**2
    XtPX = X.T @ Xhat
    XtPX = 0.5 * (XtPX + XtPX.T)
    return ProjectionStats(
        k=plan.k,
        Xhat=Xhat,
        XtPX=XtPX,
        XhatTXhat=Xhat.T @ Xhat,
        XtPy=XtPy,
        trP2=trP2,
        M_used=m_used,
        M_skipped=plan.M - m_used,
        mode=mode,
    )


def estimate_from_stats(frame: ModelFrame, stats: ProjectionStats, **extra) -> EstimationResult:
    b = spd_solve(stats.XtPX, stats.XtPy)
    inf = inference_stats(frame, stats, b)
    extra.setdefault("k_opt", stats.k)
    extra.setdefault("m_skipped_total", stats.M_skipped)
    return EstimationResult(
        b=b, N=frame.N, K=frame.K, estimator="csa2sls", names=frame.coef_names, **inf, **extra
    )


def check_subset_size(frame: ModelFrame, k: int) -> None:
    if not frame.d1 <= k <= frame.K:
        raise ValueError(f"subset size k={k} must lie between d1={frame.d1} and K={frame.K}")
    if frame.N < k + frame.q + 1:
        raise EstimationError(f"N={frame.N} too small for k={k} plus {frame.q} included instruments")


def csa2sls_fixed_k(
    frame: ModelFrame,
    k: int,
    r: int = DEFAULT_R,
    seed: int = DEFAULT_SEED,
    mode: str | None = None,
) -> EstimationResult:
    check_subset_size(frame, k)
    plan = build_subset_plan(frame.K, k, r, seed)
    stats = accumulate_projection_stats(frame, plan, mode)
    return estimate_from_stats(frame, stats)
