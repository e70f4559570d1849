"""Preliminary fits, the approximate-MSE criterion, and choice of the subset size.

The criterion for subset size k, with ``h = H^-1 lam``::

    S(k) = s_le^2 k^2 / N + s_e^2 [h' e_f h - h' xi_f H^-1 xi_f h]
    A    = X'(I - P)^2 X / N = (X'X - 2 X'PX + Xhat'Xhat) / N
    e_f  = A + Sigma_u (2k - tr(P^2)) / N
    xi_f = A + Sigma_u k / N - Sigma_u
    s_le = lam' H^-1 s_ue

where ``P`` averages the subset projectors and k counts excluded instruments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataframe import ModelFrame
from .errors import EstimationError, SingularMatrixError
from .estimators import (
    EstimationResult,
    ProjectionStats,
    accumulate_projection_stats,
    check_subset_size,
    estimate_from_stats,
    resolve_mode,
)
from .linalg import DEFAULT_RANK_TOL, spd_solve, thin_qr
from .subsets import DEFAULT_R, DEFAULT_SEED, build_subset_plan

PRELIM_MODES = ("mallows", "onestep")


@dataclass(frozen=True)
class PreliminaryFit:
    beta_tilde: np.ndarray
    eps_tilde: np.ndarray
    f_tilde: np.ndarray
    u_tilde: np.ndarray
    H: np.ndarray
    sigma_eps2: float
    sigma_ueps: np.ndarray
    Sigma_u: np.ndarray
    lam: np.ndarray
    prelim_mode: str
    prelim_ivcount: int
    mallows_scores: np.ndarray | None = None


@dataclass(frozen=True)
class AmseTerms:
    A: np.ndarray
    e_f: np.ndarray
    xi_f: np.ndarray
    sigma_le: float
    sigma_le2: float
    S: float


@dataclass(frozen=True)
class AmseEntry:
    k: int
    S: float
    M_used: int
    M_skipped: int
    sampled: bool

    @property
    def failed(self) -> bool:
        return not np.isfinite(self.S)


@dataclass
class AmseTable:
    entries: list[AmseEntry]
    k_opt: int
    stats: dict[int, ProjectionStats] = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> list[int]:
        return [e.k for e in self.entries]

    def scores(self) -> dict[int, float]:
        return {e.k: e.S for e in self.entries}


def default_lambda(frame: ModelFrame) -> np.ndarray:
    """Ones on the endogenous coefficients, zeros on exogenous ones and the constant."""
    lam = np.zeros(frame.d)
    lam[: frame.d1] = 1.0
    return lam


def mallows_first_stage(frame: ModelFrame) -> tuple[int, np.ndarray]:
    """Nested Mallows Cp over ``[z_1..z_j | x1 | const]`` for j = d1..K.

    RSS sums the squared first-stage residuals of every endogenous column;
    the penalty is ``2 * s2_full * (j + q) * d1`` with ``s2_full`` the summed
    residual variance of the largest model. Returns the chosen j and the
    score vector (index j - 1; NaN where not evaluated).
    """
    Y = frame.X[:, : frame.d1]
    n, q, K = frame.N, frame.q, frame.K
    rss = np.full(K, np.nan)
    for j in range(frame.d1, K + 1):
        f = thin_qr(np.hstack([frame.Z_excl[:, :j], frame.W]), DEFAULT_RANK_TOL)
        if not f.full_rank:
            continue
        resid = Y - f.Q @ (f.Q.T @ Y)
        rss[j - 1] = float(np.sum(resid * resid))
    if np.isnan(rss[K - 1]):
        raise SingularMatrixError("full instrument set is rank deficient")
    dof = n - K - q
    s2_full = rss[K - 1] / dof if dof > 0 else rss[K - 1] / n
    j_all = np.arange(1, K + 1)
    scores = rss + 2.0 * s2_full * (j_all + q) * frame.d1
    j_star = int(np.nanargmin(scores)) + 1
    return j_star, scores


def preliminary_estimate(frame: ModelFrame, mode: str = "mallows", lam=None) -> PreliminaryFit:
    if mode not in PRELIM_MODES:
        raise ValueError(f"unknown preliminary mode {mode!r}; expected one of {PRELIM_MODES}")
    if frame.K < frame.d1:
        raise SingularMatrixError(f"order condition fails: K={frame.K} < d1={frame.d1}")

    scores = None
    if mode == "onestep":
        n_iv = frame.K
    else:
        n_iv, scores = mallows_first_stage(frame)
    Zt = np.hstack([frame.Z_excl[:, :n_iv], frame.W])
    if frame.N < Zt.shape[1]:
        raise SingularMatrixError("preliminary design has more instruments than observations")
    f = thin_qr(Zt, DEFAULT_RANK_TOL)
    if not f.full_rank:
        raise SingularMatrixError("preliminary instrument set is rank deficient", index=f.deficient_column())

    X, y, n = frame.X, frame.y, frame.N
    f_tilde = f.Q @ (f.Q.T @ X)
    ff = f_tilde.T @ f_tilde
    beta = spd_solve(ff, f_tilde.T @ y)
    eps = y - X @ beta
    u = X - f_tilde
    lam = default_lambda(frame) if lam is None else np.asarray(lam, dtype=float)
    if lam.shape != (frame.d,):
        raise ValueError(f"lambda must have length d={frame.d}")
    return PreliminaryFit(
        beta_tilde=beta,
        eps_tilde=eps,
        f_tilde=f_tilde,
        u_tilde=u,
        H=ff / n,
        sigma_eps2=float(eps @ eps) / n,
        sigma_ueps=u.T @ eps / n,
        Sigma_u=u.T @ u / n,
        lam=lam,
        prelim_mode=mode,
        prelim_ivcount=n_iv,
        mallows_scores=scores,
    )


def amse_terms(frame: ModelFrame, prelim: PreliminaryFit, stats: ProjectionStats) -> AmseTerms:
    n, k = frame.N, stats.k
    X = frame.X
    A = (X.T @ X - 2.0 * stats.XtPX + stats.XhatTXhat) / n
    A = 0.5 * (A + A.T)
    Su = prelim.Sigma_u
    e_f = A + Su * (2.0 * k - stats.trP2) / n
    xi_f = A + Su * (k / n) - Su

    h = spd_solve(prelim.H, prelim.lam)
    sigma_le = float(h @ prelim.sigma_ueps)
    sigma_le2 = sigma_le**2
    xh = xi_f @ h
    bracket = float(h @ e_f @ h) - float(xh @ spd_solve(prelim.H, xh))
    S = sigma_le2 * k**2 / n + prelim.sigma_eps2 * bracket
    return AmseTerms(A=A, e_f=e_f, xi_f=xi_f, sigma_le=sigma_le, sigma_le2=sigma_le2, S=S)


def amse_score(frame: ModelFrame, prelim: PreliminaryFit, stats: ProjectionStats) -> float:
    return amse_terms(frame, prelim, stats).S


def select_optimal_k(
    frame: ModelFrame,
    mode: str = "mallows",
    r: int = DEFAULT_R,
    seed: int = DEFAULT_SEED,
    proj_mode: str | None = None,
    lam=None,
    prelim: PreliminaryFit | None = None,
) -> AmseTable:
    """Evaluate the criterion on k = d1..K and return the table with its argmin.

    Ties go to the smaller k. Subset sizes whose models are all rank deficient
    or whose averaged design is singular stay in the table with ``S = nan``.
    """
    prelim = prelim or preliminary_estimate(frame, mode, lam)
    proj_mode = resolve_mode(frame, proj_mode)
    entries: list[AmseEntry] = []
    cache: dict[int, ProjectionStats] = {}
    for k in range(frame.d1, frame.K + 1):
        check_subset_size(frame, k)
        plan = build_subset_plan(frame.K, k, r, seed)
        try:
            stats = accumulate_projection_stats(frame, plan, proj_mode)
        except EstimationError:
            entries.append(AmseEntry(k, float("nan"), 0, plan.M, plan.sampled))
            continue
        S = amse_score(frame, prelim, stats)
        entries.append(AmseEntry(k, S, stats.M_used, stats.M_skipped, plan.sampled))
        cache[k] = stats

    finite = [e for e in entries if np.isfinite(e.S)]
    if not finite:
        raise EstimationError("the criterion could not be evaluated for any subset size")
    best = min(finite, key=lambda e: (e.S, e.k))
    return AmseTable(entries=entries, k_opt=best.k, stats=cache)


def csa2sls(
    frame: ModelFrame,
    prelim_mode: str = "mallows",
    r: int = DEFAULT_R,
    seed: int = DEFAULT_SEED,
    proj_mode: str | None = None,
    lam=None,
) -> EstimationResult:
    """Full estimator: choose k by the approximate MSE, then fit at that k."""
    table = select_optimal_k(frame, prelim_mode, r, seed, proj_mode, lam)
    stats = table.stats[table.k_opt]
    return estimate_from_stats(
        frame,
        stats,
        k_opt=table.k_opt,
        prelim_mode=prelim_mode,
        amse_table=table,
        m_skipped_total=sum(e.M_skipped for e in table.entries),
    )
