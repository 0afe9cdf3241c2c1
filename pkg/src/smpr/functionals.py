"""Model-derived quantities and their multiplier confidence bands.

Conditional survivor functions, quantiles and quantile ratios are
evaluated against a (theta, hazard-path) pair; bands come from the
paired multiplier draws, applying the same functional to every draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ExtrapolationError,
    InsufficientDrawsError,
    InvalidInputError,
    QuantileOutOfRangeError,
)
from .inference import MultiplierDraws
from .model import Theta
from .solver import FitResult

_MIN_VALID_DRAWS = 20


@dataclass(frozen=True)
class CovariateProfile:
    """One covariate configuration (x for location, z for scale)."""

    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise InvalidInputError("profile entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    def predictors(self, theta: Theta) -> tuple[float, float]:
        if self.x.shape[0] != theta.p or self.z.shape[0] != theta.q:
            raise InvalidInputError("profile dimensions do not match theta")
        mu = -float(theta.beta @ self.x)
        sigma = math.exp(-float(theta.gamma @ self.z))
        return mu, sigma


class HazardPath:
    """Right-continuous step view of a cumulative hazard on a fixed grid."""

    def __init__(self, times: np.ndarray, values: np.ndarray, tau: float = math.inf):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.tau = tau

    @classmethod
    def from_fit(cls, fit_result: FitResult) -> "HazardPath":
        hz = fit_result.hazard
        return cls(hz.times, hz.cumulative, fit_result.cfg.tau)

    def value(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr > self.tau):
            raise ExtrapolationError("hazard undefined beyond the truncation point")
        idx = np.searchsorted(self.times, t_arr, side="right")
        vals = np.concatenate([[0.0], self.values])
        out = vals[idx]
        return float(out) if t_arr.ndim == 0 else out

    def inverse(self, c: float) -> float:
        """Generalized inverse: first grid point where the path reaches c."""
        hit = self.values >= c
        if not np.any(hit):
            raise QuantileOutOfRangeError(f"hazard never reaches {c:g}")
        return float(self.times[int(np.argmax(hit))])


def _survivor(theta: Theta, hazard: HazardPath, profile: CovariateProfile, t: float) -> float:
    if t <= 0:
        raise InvalidInputError("time must be positive")
    mu, sigma = profile.predictors(theta)
    u = (math.log(t) - mu) / sigma
    return math.exp(-hazard.value(u))


def _quantile(theta: Theta, hazard: HazardPath, profile: CovariateProfile, pi: float) -> float:
    if not 0.0 < pi < 1.0:
        raise InvalidInputError("pi must be in (0, 1)")
    mu, sigma = profile.predictors(theta)
    log_q0 = hazard.inverse(-math.log1p(-pi))
    return math.exp(mu + sigma * log_q0)


def _ratio(
    theta: Theta,
    hazard: HazardPath,
    profile_j: CovariateProfile,
    profile_i: CovariateProfile,
    pi: float,
) -> float:
    if not 0.0 < pi < 1.0:
        raise InvalidInputError("pi must be in (0, 1)")
    mu_j, sigma_j = profile_j.predictors(theta)
    mu_i, sigma_i = profile_i.predictors(theta)
    log_q0 = hazard.inverse(-math.log1p(-pi))
    return math.exp((mu_j - mu_i) + (sigma_j - sigma_i) * log_q0)


def conditional_survivor(fit_result: FitResult, profile: CovariateProfile, t: float) -> float:
    """S(t | profile) = exp(-A((log t - mu) / sigma)); step function in t."""
    return _survivor(fit_result.theta_hat, HazardPath.from_fit(fit_result), profile, t)


def conditional_quantile(fit_result: FitResult, profile: CovariateProfile, pi: float) -> float:
    """Time below which a fraction pi of lifetimes fall, for this profile."""
    return _quantile(fit_result.theta_hat, HazardPath.from_fit(fit_result), profile, pi)


def quantile_ratio(
    fit_result: FitResult,
    profile_j: CovariateProfile,
    profile_i: CovariateProfile,
    pi: float,
) -> float:
    """Lifetime quantile ratio between two profiles at probability pi.

    Constant in pi (and equal to the accelerated-failure-time constant)
    exactly when the scale predictors of the two profiles coincide.
    """
    return _ratio(fit_result.theta_hat, HazardPath.from_fit(fit_result), profile_j, profile_i, pi)


def functional_band(
    draws: MultiplierDraws,
    fit_result: FitResult,
    functional,
    level: float = 0.95,
) -> tuple[float, float, float]:
    """Point estimate and empirical band for w(theta, hazard).

    ``functional`` is called as w(theta, hazard_path); draws for which it
    raises an out-of-range or extrapolation error are skipped.
    """
    if not 0.0 < level < 1.0:
        raise InvalidInputError("level must be in (0, 1)")
    theta0 = fit_result.theta_hat
    point = float(functional(theta0, HazardPath.from_fit(fit_result)))
    tau = fit_result.cfg.tau
    p, q = theta0.p, theta0.q
    values = []
    for b in range(draws.m):
        theta = Theta.from_vector(draws.theta_b[b], p, q)
        hazard = HazardPath(draws.grid, draws.hazard_b[b], tau)
        try:
            values.append(float(functional(theta, hazard)))
        except (QuantileOutOfRangeError, ExtrapolationError):
            continue
    if len(values) < _MIN_VALID_DRAWS:
        raise InsufficientDrawsError(
            f"only {len(values)} valid draws (need {_MIN_VALID_DRAWS})"
        )
    values = np.asarray(values)
    lo = float(np.quantile(values, (1.0 - level) / 2.0))
    hi = float(np.quantile(values, (1.0 + level) / 2.0))
    return point, lo, hi


def survivor_band(
    draws: MultiplierDraws,
    fit_result: FitResult,
    profile: CovariateProfile,
    t: float,
    level: float = 0.95,
) -> tuple[float, float, float]:
    return functional_band(
        draws, fit_result, lambda th, hz: _survivor(th, hz, profile, t), level
    )


def quantile_ratio_band(
    draws: MultiplierDraws,
    fit_result: FitResult,
    profile_j: CovariateProfile,
    profile_i: CovariateProfile,
    pi: float,
    level: float = 0.95,
) -> tuple[float, float, float]:
    return functional_band(
        draws, fit_result, lambda th, hz: _ratio(th, hz, profile_j, profile_i, pi), level
    )


def ratio_pi_grid(fit_result: FitResult, n_points: int = 99) -> np.ndarray:
    """Equispaced probabilities in (0.01, 0.99), clipped to reachable quantiles."""
    pis = np.linspace(0.01, 0.99, n_points)
    reach = 1.0 - math.exp(-fit_result.hazard.total)
    return pis[pis <= reach]


def ratio_curve(
    draws: MultiplierDraws,
    fit_result: FitResult,
    profile_j: CovariateProfile,
    profile_i: CovariateProfile,
    level: float = 0.95,
    n_points: int = 99,
):
    """Quantile-ratio curve with pointwise bands over the pi grid.

    Returns (pi, ratio, lo, hi) arrays ready for CSV emission.
    """
    pis = ratio_pi_grid(fit_result, n_points)
    out = np.empty((pis.size, 3))
    for k, pi in enumerate(pis):
        out[k] = quantile_ratio_band(draws, fit_result, profile_j, profile_i, float(pi), level)
    return pis, out[:, 0], out[:, 1], out[:, 2]


def survivor_curve(
    draws: MultiplierDraws,
    fit_result: FitResult,
    profile: CovariateProfile,
    level: float = 0.95,
):
    """Fitted survivor curve with bands, stepping at the hazard jumps.

    Returns (time, survivor, lo, hi) arrays on the time scale of the profile.
    """
    mu, sigma = profile.predictors(fit_result.theta_hat)
    grid = fit_result.hazard.times
    times = np.exp(mu + sigma * grid)
    out = np.empty((times.size, 3))
    for k, t in enumerate(times):
        out[k] = survivor_band(draws, fit_result, profile, float(t), level)
    return times, out[:, 0], out[:, 1], out[:, 2]


def kaplan_meier(time: np.ndarray, event: np.ndarray):
    """Product-limit estimate on the raw time scale (for overlay output)."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    order = np.argsort(time, kind="stable")
    t_sorted = time[order]
    uniq = np.unique(time[event]) if np.any(event) else np.empty(0)
    surv = np.empty(uniq.size)
    s = 1.0
    for k, t in enumerate(uniq):
        r = time.size - np.searchsorted(t_sorted, t, side="left")
        d = int(np.sum(event & (time == t)))
        s *= 1.0 - d / r
        surv[k] = s
    return uniq, surv
