"""Resampling-based inference for the fitted parameters and hazard.

The slope matrices of the (nonsmooth) estimating function and of the
hazard functional are estimated by least-squares regression of
re-evaluated scores/hazards on Gaussian perturbations; per-subject
influence terms then give plug-in covariances, and shared Gaussian
multipliers give joint draws of (theta, hazard) for functional bands.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import (
    EmptyRiskSetError,
    InvalidInputError,
    SingularMatrixError,
)
from .estimator import EstimatorConfig, score, weight_eval
from .model import SurvivalDataset, Theta, residuals, scale_inverse
from .solver import FitResult, SolverConfig, fit as _fit

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class PerturbationSet:
    """Pre-generated Gaussian multipliers for one analysis.

    ``g_theta`` ((m, p+q), perturbations for the slope regressions) and
    ``g_obs`` ((m, n), per-subject multipliers for the conditional draws)
    are drawn from one seeded stream in this fixed order so that a single
    seed reproduces the whole analysis.
    """

    m: int
    g_theta: np.ndarray
    g_obs: np.ndarray
    seed: object

    @classmethod
    def generate(cls, m: int, dim: int, n: int, seed) -> "PerturbationSet":
        if m < 1:
            raise InvalidInputError("m must be positive")
        rng = np.random.default_rng(seed)
        g_theta = rng.standard_normal((m, dim))
        g_obs = rng.standard_normal((m, n))
        return cls(m=m, g_theta=g_theta, g_obs=g_obs, seed=seed)


@dataclass(frozen=True)
class InfluencePieces:
    """Per-subject influence terms: rows of J and the H table on a grid."""

    grid: np.ndarray
    J: np.ndarray  # (n, p+q)
    H: np.ndarray  # (len(grid), n)


@dataclass(frozen=True)
class MultiplierDraws:
    """Joint draws of (theta, hazard path); row b of each shares one multiplier vector."""

    theta_b: np.ndarray  # (m, p+q)
    hazard_b: np.ndarray  # (m, len(grid))
    grid: np.ndarray

    @property
    def m(self) -> int:
        return self.theta_b.shape[0]


@dataclass(frozen=True)
class InferenceResult:
    grid: np.ndarray
    psi_dot: np.ndarray
    theta_cov: np.ndarray
    phi_dot: np.ndarray  # (len(grid), p+q)
    hazard_var: np.ndarray  # (len(grid),) variance of the hazard estimate
    draws: MultiplierDraws
    pieces: InfluencePieces


def influence_pieces(data: SurvivalDataset, fit_result: FitResult, grid) -> InfluencePieces:
    """Plug-in influence terms at the fitted parameter.

    All integrals against the step hazard are finite sums over its jumps.
    """
    theta = fit_result.theta_hat
    cfg = fit_result.cfg
    hazard = fit_result.hazard
    n = data.n
    p, q = theta.p, theta.q
    d = p + q

    grid = np.asarray(grid, dtype=float)
    if np.any(grid > cfg.tau):
        raise InvalidInputError("grid points must not exceed tau")

    eps = residuals(data, theta)
    if grid.size and np.max(grid) > np.max(eps):
        raise EmptyRiskSetError("grid point beyond the last at-risk residual")
    siginv = scale_inverse(data, theta)
    w = np.concatenate([siginv[:, None] * data.x, data.z], axis=1)

    order = np.argsort(eps, kind="stable")
    eps_sorted = eps[order]
    suffix = np.cumsum(w[order][::-1], axis=0)[::-1]

    def eta_at(points: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(eps_sorted, points, side="left")
        r = n - idx
        if np.any(r <= 0):
            raise EmptyRiskSetError("empty risk set at an evaluation point")
        return suffix[idx] / r[:, None]

    jumps = hazard.times
    d_a = hazard.increments
    k = jumps.size

    # rho at each jump, as a (k, p+q) diagonal table
    if k:
        idx_j = np.searchsorted(eps_sorted, jumps, side="left")
        d0_jumps = (n - idx_j) / n
        rho_b, rho_g = weight_eval(cfg.weight, jumps, d0_jumps)
        rho_tab = np.concatenate(
            [np.tile(np.asarray(rho_b).reshape(-1, 1), (1, p)),
             np.tile(np.asarray(rho_g).reshape(-1, 1), (1, q))],
            axis=1,
        )
        eta_jumps = eta_at(jumps)
        cum_rho = np.vstack([np.zeros(d), np.cumsum(rho_tab * d_a[:, None], axis=0)])
        cum_rho_eta = np.vstack([np.zeros(d), np.cumsum(rho_tab * eta_jumps * d_a[:, None], axis=0)])
        cum_b = np.concatenate([[0.0], np.cumsum(d_a / d0_jumps)])
    else:
        cum_rho = np.zeros((1, d))
        cum_rho_eta = np.zeros((1, d))
        cum_b = np.zeros(1)

    # psi term: events with residual <= tau
    psi = np.zeros((n, d))
    contrib = data.event & (eps <= cfg.tau)
    if np.any(contrib):
        ev_eps = eps[contrib]
        idx_e = np.searchsorted(eps_sorted, ev_eps, side="left")
        d0_e = (n - idx_e) / n
        rb, rg = weight_eval(cfg.weight, ev_eps, d0_e)
        diff = w[contrib] - eta_at(ev_eps)
        diff[:, :p] *= np.asarray(rb).reshape(-1, 1)
        diff[:, p:] *= np.asarray(rg).reshape(-1, 1)
        psi[contrib] = diff

    # compensator integral up to min(eps_i, tau); jumps already live below tau
    pos_i = np.searchsorted(jumps, eps, side="right") if k else np.zeros(n, dtype=int)
    integral = w * cum_rho[pos_i] - cum_rho_eta[pos_i]
    J = psi - integral

    # H table: counting term minus compensator, per grid point
    d0_i = (n - np.searchsorted(eps_sorted, eps, side="left")) / n
    a_i = np.where(data.event, 1.0 / d0_i, 0.0)
    pos_t = np.searchsorted(jumps, grid, side="right") if k else np.zeros(grid.size, dtype=int)
    counting = (eps[None, :] <= grid[:, None]) * (data.event[None, :] * a_i[None, :])
    compensator = cum_b[np.minimum(pos_t[:, None], pos_i[None, :])]
    H = counting - compensator
    return InfluencePieces(grid=grid, J=J, H=H)


def _check_perturbations(perturb: PerturbationSet, dim: int):
    if perturb.m < dim + 1:
        raise InvalidInputError(f"need m >= p + q + 1 = {dim + 1}, got m = {perturb.m}")
    if np.linalg.matrix_rank(perturb.g_theta) < dim or np.linalg.cond(perturb.g_theta.T @ perturb.g_theta) > _COND_LIMIT:
        raise SingularMatrixError("perturbation design is degenerate; increase m")


def estimate_psi_dot(
    data: SurvivalDataset,
    fit_result: FitResult,
    perturb: PerturbationSet,
    cfg: EstimatorConfig | None = None,
) -> np.ndarray:
    """Least-squares slope of the rescaled score against the perturbations."""
    cfg = cfg or fit_result.cfg
    theta = fit_result.theta_hat
    dim = theta.p + theta.q
    _check_perturbations(perturb, dim)
    sqrt_n = math.sqrt(data.n)
    u = np.empty((perturb.m, dim))
    for b in range(perturb.m):
        pert = Theta.from_vector(theta.vector + perturb.g_theta[b] / sqrt_n, theta.p, theta.q)
        u[b] = sqrt_n * score(data, pert, cfg)
    coef, *_ = np.linalg.lstsq(perturb.g_theta, u, rcond=None)
    return coef.T


def estimate_phi_dot(
    data: SurvivalDataset,
    fit_result: FitResult,
    perturb: PerturbationSet,
    grid,
    cfg: EstimatorConfig | None = None,
) -> np.ndarray:
    """Least-squares slope rows of the hazard at each grid point.

    The hazard is re-computed (not re-solved) at each perturbed parameter,
    using the same perturbation set as the score regression.
    """
    from .estimator import nelson_aalen

    cfg = cfg or fit_result.cfg
    theta = fit_result.theta_hat
    dim = theta.p + theta.q
    _check_perturbations(perturb, dim)
    grid = np.asarray(grid, dtype=float)
    sqrt_n = math.sqrt(data.n)
    base = fit_result.hazard.evaluate(grid)
    u = np.empty((perturb.m, grid.size))
    for b in range(perturb.m):
        pert = Theta.from_vector(theta.vector + perturb.g_theta[b] / sqrt_n, theta.p, theta.q)
        u[b] = sqrt_n * (nelson_aalen(data, pert, cfg.tau).evaluate(grid) - base)
    coef, *_ = np.linalg.lstsq(perturb.g_theta, u, rcond=None)
    return coef.T  # (len(grid), p+q)


def _solve_psi(psi_dot: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if np.linalg.cond(psi_dot) > _COND_LIMIT:
        raise SingularMatrixError("estimated score slope matrix is singular")
    return np.linalg.solve(psi_dot, rhs)


def theta_covariance(pieces: InfluencePieces, psi_dot: np.ndarray) -> np.ndarray:
    """Plug-in covariance of the parameter estimate itself."""
    n = pieces.J.shape[0]
    jt = _solve_psi(psi_dot, pieces.J.T)  # (p+q, n)
    cov = (jt @ jt.T) / (n * n)
    return (cov + cov.T) / 2.0


def hazard_variance(pieces: InfluencePieces, psi_dot: np.ndarray, phi_dot: np.ndarray) -> np.ndarray:
    """Plug-in variance of the hazard estimate at each grid point."""
    n = pieces.J.shape[0]
    k = phi_dot @ _solve_psi(psi_dot, pieces.J.T)  # (len(grid), n)
    return np.sum((pieces.H - k) ** 2, axis=1) / (n * n)


def multiplier_draws(
    pieces: InfluencePieces,
    fit_result: FitResult,
    psi_dot: np.ndarray,
    phi_dot: np.ndarray,
    perturb: PerturbationSet,
) -> MultiplierDraws:
    """Joint conditional-multiplier draws of (theta, hazard path).

    Each draw uses one shared per-subject multiplier vector for both the
    parameter and the (log-scale) hazard formulas, preserving their
    dependence for downstream functionals.
    """
    n = pieces.J.shape[0]
    g = perturb.g_obs
    if g.shape[1] != n:
        raise InvalidInputError("perturbation set was generated for a different n")
    jt_inv = _solve_psi(psi_dot, pieces.J.T).T  # (n, p+q)
    theta_b = fit_result.theta_hat.vector[None, :] - (g @ jt_inv) / n

    a_grid = fit_result.hazard.evaluate(pieces.grid)
    valid = a_grid > 0.0
    if not np.all(valid):
        warnings.warn(
            f"excluding {int(np.sum(~valid))} grid point(s) with zero hazard from draws",
            stacklevel=2,
        )
    grid = pieces.grid[valid]
    a_v = a_grid[valid]
    c = pieces.H[valid] - phi_dot[valid] @ _solve_psi(psi_dot, pieces.J.T)  # (gv, n)
    # clip the log-scale argument so extreme draws stay finite
    arg = np.clip((g @ c.T) / (n * a_v[None, :]), -700.0, 700.0)
    hazard_b = a_v[None, :] * np.exp(arg)
    return MultiplierDraws(theta_b=theta_b, hazard_b=hazard_b, grid=grid)


def wald_ci(estimate: float, variance: float, level: float) -> tuple[float, float]:
    """Symmetric normal-quantile interval."""
    if variance < 0:
        raise InvalidInputError("variance must be nonnegative")
    if not 0.0 < level < 1.0:
        raise InvalidInputError("level must be in (0, 1)")
    half = ndtri((1.0 + level) / 2.0) * math.sqrt(variance)
    return estimate - half, estimate + half


def log_scale_hazard_ci(estimate: float, variance: float, level: float) -> tuple[float, float]:
    """Interval for a positive hazard value, built on the log scale."""
    if estimate <= 0:
        raise InvalidInputError("hazard estimate must be positive for a log-scale interval")
    lo, hi = wald_ci(0.0, variance / (estimate * estimate), level)
    return estimate * math.exp(lo), estimate * math.exp(hi)


def joint_test(theta_hat: Theta, theta_cov: np.ndarray, indices: tuple[int, int]) -> tuple[float, float]:
    """Chi-squared (2 df) test of a (beta_j, gamma_j) pair being jointly zero."""
    i, j = indices
    v = theta_hat.vector[[i, j]]
    sub = theta_cov[np.ix_([i, j], [i, j])]
    if np.linalg.cond(sub) > _COND_LIMIT:
        raise SingularMatrixError("2x2 covariance submatrix is singular")
    stat = float(v @ np.linalg.solve(sub, v))
    return stat, math.exp(-stat / 2.0)


def inference_grid(fit_result: FitResult, extra_points=()) -> np.ndarray:
    """Hazard jump points plus user points, all at or below tau."""
    pts = np.concatenate([fit_result.hazard.times, np.asarray(extra_points, dtype=float)])
    pts = np.unique(pts)
    return pts[pts <= fit_result.cfg.tau]


def analyze(
    data: SurvivalDataset,
    cfg: EstimatorConfig,
    solver: SolverConfig = SolverConfig(),
    m: int = 1000,
    seed=None,
    extra_grid=(),
) -> tuple[FitResult, InferenceResult]:
    """Fit the model and run the full resampling-inference pipeline."""
    fit_result = _fit(data, cfg, solver)
    result = infer(data, fit_result, m=m, seed=seed, extra_grid=extra_grid)
    return fit_result, result


def infer(
    data: SurvivalDataset,
    fit_result: FitResult,
    m: int = 1000,
    seed=None,
    extra_grid=(),
) -> InferenceResult:
    """Resampling inference for an existing fit."""
    dim = fit_result.theta_hat.p + fit_result.theta_hat.q
    grid = inference_grid(fit_result, extra_grid)
    perturb = PerturbationSet.generate(m, dim, data.n, seed)
    pieces = influence_pieces(data, fit_result, grid)
    psi_dot = estimate_psi_dot(data, fit_result, perturb)
    phi_dot = estimate_phi_dot(data, fit_result, perturb, grid)
    cov = theta_covariance(pieces, psi_dot)
    hvar = hazard_variance(pieces, psi_dot, phi_dot)
    draws = multiplier_draws(pieces, fit_result, psi_dot, phi_dot, perturb)
    return InferenceResult(
        grid=grid,
        psi_dot=psi_dot,
        theta_cov=cov,
        phi_dot=phi_dot,
        hazard_var=hvar,
        draws=draws,
        pieces=pieces,
    )
