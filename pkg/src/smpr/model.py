"""Parametric skeleton of the location-scale survival model.

The model is log T = mu + sigma * e with mu = -beta'x and
sigma = exp(-gamma'z); the error hazard is left unspecified and is
estimated elsewhere.  Everything here is a pure function of immutable
values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericOverflowError

# exp() overflows just above exp(709); guard a little below that.
_EXP_GUARD = 700.0


def _as_float_vector(v, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Theta:
    """Parameter vector: location coefficients beta and scale coefficients gamma.

    The concatenation order (beta, gamma) is used by every matrix indexed
    by parameters.
    """

    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", _as_float_vector(self.beta, "beta"))
        object.__setattr__(self, "gamma", _as_float_vector(self.gamma, "gamma"))
        if self.p + self.q < 1:
            raise InvalidInputError("model needs at least one coefficient (p + q >= 1)")

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    @property
    def q(self) -> int:
        return self.gamma.shape[0]

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.gamma])

    @classmethod
    def from_vector(cls, v, p: int, q: int) -> "Theta":
        v = np.asarray(v, dtype=float)
        if v.shape != (p + q,):
            raise InvalidInputError(f"expected vector of length {p + q}, got shape {v.shape}")
        return cls(beta=v[:p], gamma=v[p:])

    @classmethod
    def zeros(cls, p: int, q: int) -> "Theta":
        return cls(beta=np.zeros(p), gamma=np.zeros(q))


@dataclass(frozen=True)
class Observation:
    """One subject: log observed time, event indicator and covariates."""

    log_time: float
    event: bool
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.log_time):
            raise InvalidInputError("log_time must be finite")
        object.__setattr__(self, "x", _as_float_vector(self.x, "x") if np.size(self.x) else np.empty(0))
        object.__setattr__(self, "z", _as_float_vector(self.z, "z") if np.size(self.z) else np.empty(0))


@dataclass(frozen=True)
class SurvivalDataset:
    """Sample of n observations in array form.

    ``log_time`` has shape (n,), ``event`` (n,) boolean, ``x`` (n, p) and
    ``z`` (n, q).  Covariates are taken as supplied; no internal centering.
    """

    log_time: np.ndarray
    event: np.ndarray
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        lt = np.asarray(self.log_time, dtype=float)
        ev = np.asarray(self.event, dtype=bool)
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        n = lt.shape[0]
        if x.ndim == 1:
            x = x.reshape(n, -1) if x.size else x.reshape(n, 0)
        if z.ndim == 1:
            z = z.reshape(n, -1) if z.size else z.reshape(n, 0)
        if lt.ndim != 1 or ev.shape != (n,) or x.shape[0] != n or z.shape[0] != n:
            raise InvalidInputError("log_time, event, x and z must agree on n")
        if not np.all(np.isfinite(lt)) or not np.all(np.isfinite(x)) or not np.all(np.isfinite(z)):
            raise InvalidInputError("dataset contains non-finite values")
        for a in (lt, ev, x, z):
            a.setflags(write=False)
        object.__setattr__(self, "log_time", lt)
        object.__setattr__(self, "event", ev)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.log_time.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.z.shape[1]

    @classmethod
    def from_observations(cls, observations) -> "SurvivalDataset":
        obs = list(observations)
        if not obs:
            raise InvalidInputError("empty dataset")
        p = obs[0].x.shape[0]
        q = obs[0].z.shape[0]
        for o in obs:
            if o.x.shape[0] != p or o.z.shape[0] != q:
                raise InvalidInputError("observations disagree on covariate dimensions")
        return cls(
            log_time=np.array([o.log_time for o in obs]),
            event=np.array([o.event for o in obs], dtype=bool),
            x=np.array([o.x for o in obs]).reshape(len(obs), p),
            z=np.array([o.z for o in obs]).reshape(len(obs), q),
        )

    def observation(self, i: int) -> Observation:
        return Observation(
            log_time=float(self.log_time[i]),
            event=bool(self.event[i]),
            x=self.x[i].copy(),
            z=self.z[i].copy(),
        )

    def _check_theta(self, theta: Theta):
        if theta.p != self.p or theta.q != self.q:
            raise InvalidInputError(
                f"theta has (p, q)=({theta.p}, {theta.q}) but data has ({self.p}, {self.q})"
            )


def linear_predictors(obs: Observation, theta: Theta) -> tuple[float, float]:
    """Return (mu, sigma) = (-beta'x, exp(-gamma'z)) for one observation."""
    if obs.x.shape[0] != theta.p or obs.z.shape[0] != theta.q:
        raise InvalidInputError("covariate dimensions do not match theta")
    mu = -float(theta.beta @ obs.x)
    lin = float(theta.gamma @ obs.z)
    if abs(lin) > _EXP_GUARD:
        raise NumericOverflowError(f"|gamma'z| = {abs(lin):g} exceeds exp guard")
    return mu, float(np.exp(-lin))


def residual(obs: Observation, theta: Theta) -> float:
    """Standardized residual exp(gamma'z) * (log_time + beta'x)."""
    mu, sigma = linear_predictors(obs, theta)
    return (obs.log_time - mu) / sigma


def scale_inverse(data: SurvivalDataset, theta: Theta) -> np.ndarray:
    """1/sigma_i = exp(gamma'z_i) for all subjects."""
    data._check_theta(theta)
    lin = data.z @ theta.gamma if theta.q else np.zeros(data.n)
    amax = np.max(np.abs(lin)) if data.n else 0.0
    if amax > _EXP_GUARD:
        raise NumericOverflowError(f"|gamma'z| up to {amax:g} exceeds exp guard")
    return np.exp(lin)


def residuals(data: SurvivalDataset, theta: Theta) -> np.ndarray:
    """Vector of standardized residuals eps_i for the whole sample."""
    siginv = scale_inverse(data, theta)
    shift = data.x @ theta.beta if theta.p else np.zeros(data.n)
    return siginv * (data.log_time + shift)
