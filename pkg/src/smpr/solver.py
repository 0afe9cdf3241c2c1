"""Derivative-free root search for the rank-based estimating function.

The estimating function is a non-smooth step function of theta, so the
fit minimizes its norm with Nelder-Mead (standard coefficients) plus a
small number of restarts around the incumbent to escape flat plateaus.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_ndtr

from .errors import InvalidInputError
from .estimator import EstimatorConfig, StepHazard, nelson_aalen, objective
from .model import SurvivalDataset, Theta

_OBJECTIVE_ZERO = 1e-8
_LOG_SQRT_2PI = 0.9189385332046727
_WARM_START_BOUND = 50.0


@dataclass(frozen=True)
class SolverConfig:
    initial: Theta | None = None
    max_iterations: int = 2000
    tolerance: float = 1e-6
    restarts: int = 2

    def __post_init__(self):
        if self.tolerance <= 0:
            raise InvalidInputError("tolerance must be positive")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be at least 1")
        if self.restarts < 0:
            raise InvalidInputError("restarts must be nonnegative")


@dataclass(frozen=True)
class FitResult:
    theta_hat: Theta
    hazard: StepHazard
    objective_value: float
    converged: bool
    cfg: EstimatorConfig
    solver: SolverConfig
    n: int
    n_evaluations: int = 0
    diagnostic: str = ""


def _nelder_mead(f, x0: np.ndarray, edge: float, tol: float, max_iter: int):
    """Standard Nelder-Mead (reflect 1, expand 2, contract 0.5, shrink 0.5).

    Stops when the simplex diameter drops below ``tol`` or the best value
    below the objective-zero threshold.  Ties in objective value are broken
    lexicographically on the vertex coordinates for determinism.

    Returns (best_x, best_f, diameter, n_evals).
    """
    d = x0.shape[0]
    verts = np.tile(x0, (d + 1, 1))
    for k in range(d):
        verts[k + 1, k] += edge
    fvals = np.array([f(v) for v in verts])
    evals = d + 1

    def sort_simplex():
        order = sorted(range(d + 1), key=lambda i: (fvals[i], tuple(verts[i])))
        return verts[order], fvals[np.array(order)]

    verts, fvals = sort_simplex()
    for _ in range(max_iter):
        diam = float(np.max(np.linalg.norm(verts[1:] - verts[0], axis=1)))
        if diam < tol or fvals[0] < _OBJECTIVE_ZERO:
            break
        centroid = verts[:-1].mean(axis=0)
        xr = centroid + (centroid - verts[-1])
        fr = f(xr)
        evals += 1
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - verts[-1])
            fe = f(xe)
            evals += 1
            if fe < fr:
                verts[-1], fvals[-1] = xe, fe
            else:
                verts[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            verts[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (verts[-1] - centroid)
            fc = f(xc)
            evals += 1
            if fc < min(fr, fvals[-1]):
                verts[-1], fvals[-1] = xc, fc
            else:
                # shrink toward the best vertex
                verts[1:] = verts[0] + 0.5 * (verts[1:] - verts[0])
                fvals[1:] = [f(v) for v in verts[1:]]
                evals += d
        verts, fvals = sort_simplex()
    diam = float(np.max(np.linalg.norm(verts[1:] - verts[0], axis=1)))
    return verts[0], float(fvals[0]), diam, evals


def warm_start(data: SurvivalDataset) -> Theta:
    """Censored log-normal location-scale maximum likelihood start point.

    The norm of the estimating function vanishes far from the data as well
    as at the root, so a simplex search launched from the origin can drift
    off to a spurious flat region.  Starting from the parametric location-
    scale fit places the simplex inside the basin of the genuine root.
    """
    y, d = data.log_time, data.event
    x_mat, z_mat = data.x, data.z
    p, q = data.p, data.q

    def nll(v: np.ndarray) -> float:
        beta, gamma = v[:p], v[p:]
        lin = z_mat @ gamma
        if np.max(np.abs(lin)) > _WARM_START_BOUND:
            return 1e10
        u = np.exp(lin) * (y + x_mat @ beta)
        ll = np.where(d, -0.5 * u * u - _LOG_SQRT_2PI + lin, log_ndtr(-u))
        return -float(np.sum(ll))

    result = minimize(nll, np.zeros(p + q), method="BFGS")
    return Theta.from_vector(result.x, p, q)


def fit(data: SurvivalDataset, cfg: EstimatorConfig, solver: SolverConfig = SolverConfig()) -> FitResult:
    """Minimize the norm of the estimating function and attach the hazard."""
    if not np.any(data.event):
        raise InvalidInputError("cannot fit: no events in dataset")
    p, q = data.p, data.q
    if data.n < p + q + 1:
        raise InvalidInputError(f"need n >= p + q + 1 = {p + q + 1}, got n = {data.n}")
    initial = solver.initial if solver.initial is not None else warm_start(data)
    data._check_theta(initial)

    def f(v: np.ndarray) -> float:
        return objective(data, Theta.from_vector(v, p, q), cfg)

    x = initial.vector
    fx = f(x)
    total_evals = 1
    if fx < _OBJECTIVE_ZERO:
        # already at a root
        theta_hat = Theta.from_vector(x, p, q)
        return FitResult(
            theta_hat=theta_hat,
            hazard=nelson_aalen(data, theta_hat, cfg.tau),
            objective_value=fx,
            converged=True,
            cfg=cfg,
            solver=solver,
            n=data.n,
            n_evaluations=total_evals,
        )

    diam = np.inf
    edge = 0.1
    for _ in range(solver.restarts + 1):
        x, fx, diam, evals = _nelder_mead(f, x, edge, solver.tolerance, solver.max_iterations)
        total_evals += evals
        edge = 0.02  # restart simplex around the incumbent
        if fx < _OBJECTIVE_ZERO:
            break

    converged = diam < solver.tolerance or fx < _OBJECTIVE_ZERO
    theta_hat = Theta.from_vector(x, p, q)
    diagnostic = "" if converged else (
        f"not converged after {solver.restarts + 1} runs: "
        f"objective={fx:.3e}, simplex diameter={diam:.3e}"
    )
    return FitResult(
        theta_hat=theta_hat,
        hazard=nelson_aalen(data, theta_hat, cfg.tau),
        objective_value=fx,
        converged=converged,
        cfg=cfg,
        solver=solver,
        n=data.n,
        n_evaluations=total_evals,
        diagnostic=diagnostic,
    )
