"""Rank-based estimating function, at-risk summaries and the step hazard.

The estimating function is a weighted rank score over the transformed
residuals; the baseline cumulative hazard is estimated by a
Nelson-Aalen step function on the same residual scale.  Ties share one
risk set (all tied subjects included, jump = events/at-risk).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import erfcx, ndtr

from .errors import EmptyRiskSetError, InvalidInputError
from .model import SurvivalDataset, Theta, residuals, scale_inverse

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class WeightSpec(Enum):
    """Weight family rho(u); rho_gamma(u) = rho(u) * u + 1 throughout."""

    LOG_RANK = "logrank"
    GEHAN = "gehan"
    NORMAL = "normal"


@dataclass(frozen=True)
class EstimatorConfig:
    """Truncation point (on the residual scale) and weight family."""

    tau: float = math.inf
    weight: WeightSpec = WeightSpec.LOG_RANK

    def __post_init__(self):
        if math.isnan(self.tau):
            raise InvalidInputError("tau must be a real number or +inf")


@dataclass(frozen=True)
class RiskSummary:
    """At-risk fraction and at-risk covariate averages at one point."""

    t: float
    d0: float
    eta_beta: np.ndarray
    eta_gamma: np.ndarray


@dataclass(frozen=True)
class StepHazard:
    """Right-continuous step estimate of a cumulative hazard.

    ``times`` are the (strictly increasing) jump locations and
    ``increments`` the corresponding jump sizes.
    """

    times: np.ndarray
    increments: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        inc = np.asarray(self.increments, dtype=float)
        if t.shape != inc.shape or t.ndim != 1:
            raise InvalidInputError("times and increments must be 1-d of equal length")
        if t.size and np.any(np.diff(t) <= 0):
            raise InvalidInputError("jump times must be strictly increasing")
        if np.any(inc <= 0):
            raise InvalidInputError("increments must be positive")
        t.setflags(write=False)
        inc.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "increments", inc)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments)

    @property
    def total(self) -> float:
        return float(np.sum(self.increments))

    def evaluate(self, t):
        """Cumulative value at t (scalar or array); 0 below the first jump."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t_arr, side="right")
        cum = np.concatenate([[0.0], self.cumulative])
        out = cum[idx]
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def _normal_rho(u: np.ndarray) -> np.ndarray:
    """rho(u) = pdf(u)/(1 - cdf(u)) - u for the standard normal.

    Uses the scaled complementary error function for moderate u and the
    asymptotic expansion in the far right tail; relative error below
    1e-10 everywhere.
    """
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    neg = u < 0.0
    big = u > 100.0
    mid = ~neg & ~big
    if np.any(neg):
        un = u[neg]
        # survival function is close to 1 here, no cancellation
        pdf = np.exp(-0.5 * un * un) / math.sqrt(2.0 * math.pi)
        out[neg] = pdf / ndtr(-un) - un
    if np.any(mid):
        um = u[mid]
        out[mid] = _SQRT_2_OVER_PI / erfcx(um / math.sqrt(2.0)) - um
    if np.any(big):
        x = 1.0 / (u[big] * u[big])
        out[big] = (1.0 - x * (2.0 - x * (10.0 - 74.0 * x))) / u[big]
    return out


def weight_eval(spec: WeightSpec, u, at_risk_fraction=None):
    """Evaluate (rho_beta(u), rho_gamma(u)); vectorized over u.

    ``at_risk_fraction`` is only consulted by the Gehan weight.
    """
    u = np.asarray(u, dtype=float)
    if spec is WeightSpec.LOG_RANK:
        rho_b = np.ones_like(u)
    elif spec is WeightSpec.GEHAN:
        if at_risk_fraction is None:
            raise InvalidInputError("Gehan weight requires the at-risk fraction")
        frac = np.asarray(at_risk_fraction, dtype=float)
        if np.any(frac < 0.0) or np.any(frac > 1.0):
            raise InvalidInputError("at-risk fraction must lie in [0, 1]")
        rho_b = np.broadcast_to(frac, u.shape).astype(float)
    elif spec is WeightSpec.NORMAL:
        rho_b = _normal_rho(u)
    else:  # pragma: no cover
        raise InvalidInputError(f"unknown weight {spec!r}")
    rho_g = rho_b * u + 1.0
    if u.ndim == 0:
        return float(rho_b), float(rho_g)
    return rho_b, rho_g


def _scaled_covariates(data: SurvivalDataset, siginv: np.ndarray) -> np.ndarray:
    """n x (p+q) matrix with rows (x_i / sigma_i, z_i)."""
    return np.concatenate([siginv[:, None] * data.x, data.z], axis=1)


def risk_summary(data: SurvivalDataset, theta: Theta, t: float) -> RiskSummary:
    """Exact at-risk averages over {j : eps_j >= t}; ties are in the risk set."""
    eps = residuals(data, theta)
    at_risk = eps >= t
    r = int(np.count_nonzero(at_risk))
    if r == 0:
        raise EmptyRiskSetError(f"no subject at risk at t={t:g}")
    siginv = scale_inverse(data, theta)
    eta_beta = (siginv[at_risk, None] * data.x[at_risk]).mean(axis=0) if data.p else np.empty(0)
    eta_gamma = data.z[at_risk].mean(axis=0) if data.q else np.empty(0)
    return RiskSummary(t=float(t), d0=r / data.n, eta_beta=eta_beta, eta_gamma=eta_gamma)


def nelson_aalen(data: SurvivalDataset, theta: Theta, tau: float = math.inf) -> StepHazard:
    """Step hazard with jumps d_k / r_k at distinct event residuals <= tau."""
    eps = residuals(data, theta)
    order = np.argsort(eps, kind="stable")
    eps_sorted = eps[order]
    ev = data.event & (eps <= tau)
    ev_eps = np.sort(eps[ev])
    times, counts = np.unique(ev_eps, return_counts=True)
    if times.size == 0:
        return StepHazard(times=np.empty(0), increments=np.empty(0))
    at_risk = data.n - np.searchsorted(eps_sorted, times, side="left")
    return StepHazard(times=times, increments=counts / at_risk)


def score(data: SurvivalDataset, theta: Theta, cfg: EstimatorConfig) -> np.ndarray:
    """Weighted rank estimating function, length p+q.

    First p entries carry rho_beta, last q entries rho_gamma; only events
    with residual <= tau contribute.
    """
    data._check_theta(theta)
    n = data.n
    siginv = scale_inverse(data, theta)
    shift = data.x @ theta.beta if theta.p else 0.0
    eps = siginv * (data.log_time + shift)
    w = _scaled_covariates(data, siginv)

    order = np.argsort(eps, kind="stable")
    eps_sorted = eps[order]
    suffix = np.cumsum(w[order][::-1], axis=0)[::-1]

    contrib = data.event & (eps <= cfg.tau)
    if not np.any(contrib):
        return np.zeros(theta.p + theta.q)
    ev_eps = eps[contrib]
    ev_w = w[contrib]
    idx = np.searchsorted(eps_sorted, ev_eps, side="left")
    at_risk = n - idx
    eta = suffix[idx] / at_risk[:, None]
    rho_b, rho_g = weight_eval(cfg.weight, ev_eps, at_risk / n)

    diff = ev_w - eta
    p = theta.p
    diff[:, :p] *= np.asarray(rho_b).reshape(-1, 1)
    diff[:, p:] *= np.asarray(rho_g).reshape(-1, 1)
    return diff.sum(axis=0) / n


def objective(data: SurvivalDataset, theta: Theta, cfg: EstimatorConfig) -> float:
    """Euclidean norm of the estimating function."""
    return float(np.linalg.norm(score(data, theta, cfg)))
