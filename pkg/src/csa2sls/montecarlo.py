"""Simulation harness: equicorrelated instruments, OLS vs 2SLS vs CSA2SLS.

Design per replication::

    y = beta0 + beta1 * Y + eps
    Y = pi' z + u,     z ~ N(0, Sigma_z),  Sigma_z = (1 - rho) I + rho 11'
    (eps, u) ~ N(0, [[1, c], [c, 1]])

Every element of ``pi`` equals ``sqrt(r1sq / ((1 - r1sq) (K + K(K-1) rho)))``
so the population first-stage R^2 is exactly ``r1sq``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .amse import csa2sls
from .dataframe import ModelFrame
from .errors import Csa2slsError
from .estimators import ols, tsls

log = logging.getLogger(__name__)

ESTIMATORS = ("ols", "tsls", "csa2sls")
TSV_HEADER = "K\trho\testimator\tbias\tmse\tfailures\tmean_k_opt"


@dataclass(frozen=True)
class McConfig:
    K_grid: tuple[int, ...] = (5, 10, 15, 20)
    rho_grid: tuple[float, ...] = (0.0, 0.5, 0.9)
    n: int = 100
    reps: int = 1000
    beta0: float = 0.0
    beta1: float = 0.1
    cov_eps_u: float = 0.9
    r1sq: float = 0.1
    seed: int = 2022
    r: int = 100
    prelim_mode: str = "mallows"
    proj_mode: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "K_grid", tuple(int(k) for k in self.K_grid))
        object.__setattr__(self, "rho_grid", tuple(float(r) for r in self.rho_grid))
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not self.K_grid or not self.rho_grid:
            raise ValueError("K_grid and rho_grid must be non-empty")
        for rho in self.rho_grid:
            if not 0.0 <= rho < 1.0:
                raise ValueError(f"rho must lie in [0, 1), got {rho}")
        for K in self.K_grid:
            if K < 1:
                raise ValueError(f"K must be positive, got {K}")
            if self.n <= K + 2:
                raise ValueError(f"n={self.n} must exceed K + 2 for K={K}")
        if not 0.0 < self.r1sq < 1.0:
            raise ValueError("r1sq must lie in (0, 1)")
        if not -1.0 < self.cov_eps_u < 1.0:
            raise ValueError("cov_eps_u must lie in (-1, 1)")


@dataclass
class EstimatorSummary:
    bias: float
    mse: float
    failures: int
    mean_k_opt: float = float("nan")


@dataclass
class McCellResult:
    K: int
    rho: float
    reps: int
    summaries: dict[str, EstimatorSummary] = field(default_factory=dict)

    def __getitem__(self, estimator: str) -> EstimatorSummary:
        return self.summaries[estimator]


def pi_element(K: int, rho: float, r1sq: float = 0.1) -> float:
    return math.sqrt(r1sq / ((1.0 - r1sq) * (K + K * (K - 1) * rho)))


def equicorrelation(K: int, rho: float) -> np.ndarray:
    return (1.0 - rho) * np.eye(K) + rho * np.ones((K, K))


def first_stage_r2(K: int, rho: float, r1sq: float = 0.1) -> float:
    """Population R^2 of the first stage implied by the calibrated ``pi``."""
    pi = np.full(K, pi_element(K, rho, r1sq))
    signal = float(pi @ equicorrelation(K, rho) @ pi)
    return signal / (signal + 1.0)


def draw_errors(n: int, cov: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    e = rng.standard_normal((n, 2))
    eps = e[:, 0]
    u = cov * e[:, 0] + math.sqrt(1.0 - cov * cov) * e[:, 1]
    return eps, u


def generate_sample(
    K: int,
    rho: float,
    n: int,
    rng: np.random.Generator,
    *,
    r1sq: float = 0.1,
    cov_eps_u: float = 0.9,
    beta0: float = 0.0,
    beta1: float = 0.1,
) -> ModelFrame:
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    g = rng.standard_normal((n, 1))
    z = math.sqrt(rho) * g + math.sqrt(1.0 - rho) * rng.standard_normal((n, K))
    eps, u = draw_errors(n, cov_eps_u, rng)
    Y = z @ np.full(K, pi_element(K, rho, r1sq)) + u
    y = beta0 + beta1 * Y + eps
    return ModelFrame.from_arrays(y, Y, z, constant=True, depvar="y", endo_names=("Y",))


def _rep_rng(seed: int, K: int, rho: float, rep: int) -> np.random.Generator:
    rho_key = int(round(rho * 1_000_000))
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(K), rho_key, int(rep)]))


def run_replication(config: McConfig, K: int, rho: float, rep: int) -> dict[str, tuple[float, int | None] | None]:
    """Slope estimates of each estimator for one replication (None on failure)."""
    rng = _rep_rng(config.seed, K, rho, rep)
    frame = generate_sample(
        K, rho, config.n, rng,
        r1sq=config.r1sq, cov_eps_u=config.cov_eps_u, beta0=config.beta0, beta1=config.beta1,
    )
    plan_seed = int(rng.integers(0, 2**63 - 1))
    out: dict[str, tuple[float, int | None] | None] = {}
    fits = {
        "ols": lambda: ols(frame.X, frame.y),
        "tsls": lambda: tsls(frame),
        "csa2sls": lambda: csa2sls(
            frame, prelim_mode=config.prelim_mode, r=config.r, seed=plan_seed, proj_mode=config.proj_mode
        ),
    }
    for name, fit in fits.items():
        try:
            res = fit()
        except Csa2slsError as exc:
            log.debug("K=%d rho=%g rep=%d: %s failed: %s", K, rho, rep, name, exc)
            out[name] = None
            continue
        out[name] = (float(res.b[0]), res.k_opt)
    return out


def _run_chunk(args):
    config, K, rho, reps = args
    return [run_replication(config, K, rho, rep) for rep in reps]


def _summarize(config: McConfig, K: int, rho: float, draws: list[dict]) -> McCellResult:
    cell = McCellResult(K=K, rho=rho, reps=config.reps)
    for name in ESTIMATORS:
        vals = [d[name] for d in draws if d[name] is not None]
        failures = len(draws) - len(vals)
        if vals:
            est = np.array([v[0] for v in vals])
            dev = est - config.beta1
            bias = float(np.mean(est) - config.beta1)
            mse = float(np.mean(dev * dev))
        else:
            bias = mse = float("nan")
        kk = [v[1] for v in vals if v[1] is not None]
        mean_k = float(np.mean(kk)) if kk else float("nan")
        cell.summaries[name] = EstimatorSummary(bias=bias, mse=mse, failures=failures, mean_k_opt=mean_k)
    return cell


def run_cell(config: McConfig, K: int, rho: float, workers: int = 1) -> McCellResult:
    """Run every replication of one (K, rho) cell.

    Replications own independent RNG streams and are aggregated in
    replication order, so the result does not depend on ``workers``.
    """
    reps = list(range(config.reps))
    if workers <= 1:
        draws = _run_chunk((config, K, rho, reps))
    else:
        size = max(1, math.ceil(len(reps) / (4 * workers)))
        chunks = [(config, K, rho, reps[i:i + size]) for i in range(0, len(reps), size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            draws = [d for part in pool.map(_run_chunk, chunks) for d in part]
    return _summarize(config, K, rho, draws)


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else format(x, ".17g")


def format_tsv(config: McConfig, cells: list[McCellResult]) -> str:
    meta = {k: v for k, v in asdict(config).items() if k not in ("K_grid", "rho_grid")}
    lines = ["# " + " ".join(f"{k}={v}" for k, v in meta.items()), TSV_HEADER]
    for cell in cells:
        for name in ESTIMATORS:
            s = cell.summaries[name]
            lines.append(
                "\t".join([
                    str(cell.K), _fmt(cell.rho), name, _fmt(s.bias), _fmt(s.mse),
                    str(s.failures), _fmt(s.mean_k_opt),
                ])
            )
    return "\n".join(lines) + "\n"


def run_grid(config: McConfig, out_path=None, workers: int = 1, progress=None) -> list[McCellResult]:
    """Evaluate every (K, rho) cell; optionally write the TSV to ``out_path``.

    ``progress`` is called with each finished cell.
    """
    cells = []
    for rho in config.rho_grid:
        for K in config.K_grid:
            cell = run_cell(config, K, rho, workers=workers)
            cells.append(cell)
            if progress is not None:
                progress(cell)
    if out_path is not None:
        path = Path(out_path)
        with path.open("w", newline="\n") as fh:
            fh.write(format_tsv(config, cells))
    return cells


def with_overrides(config: McConfig, **overrides) -> McConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
