import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smpr.errors import EmptyRiskSetError, InvalidInputError
from smpr.estimator import (
    EstimatorConfig,
    StepHazard,
    WeightSpec,
    nelson_aalen,
    objective,
    risk_summary,
    score,
    weight_eval,
)
from smpr.model import SurvivalDataset, Theta, residuals

from conftest import random_dataset


def dataset(log_times, events=None, x=None, z=None):
    n = len(log_times)
    if events is None:
        events = [True] * n
    if x is None:
        x = np.zeros((n, 0))
    if z is None:
        z = np.zeros((n, 0))
    return SurvivalDataset(log_time=np.asarray(log_times, float), event=events, x=x, z=z)


# ---------------------------------------------------------------- oracles

def brute_force_logrank_score(data, beta, tau=math.inf):
    """Double loop over events and risk sets, q=0, log-rank weight."""
    eps = data.log_time + data.x @ beta
    p = data.x.shape[1]
    total = np.zeros(p)
    for i in range(data.n):
        if not data.event[i] or eps[i] > tau:
            continue
        at_risk = eps >= eps[i]
        total += data.x[i] - data.x[at_risk].mean(axis=0)
    return total / data.n


def brute_force_gehan_score(data, beta):
    """Pairwise rank form (1/n^2) sum_i sum_j d_i (x_i - x_j) I(e_j >= e_i)."""
    eps = data.log_time + data.x @ beta
    p = data.x.shape[1]
    total = np.zeros(p)
    for i in range(data.n):
        if not data.event[i]:
            continue
        for j in range(data.n):
            if eps[j] >= eps[i]:
                total += data.x[i] - data.x[j]
    return total / data.n**2


def brute_force_nelson_aalen(log_times, events):
    """Textbook product: jump (#events at t) / (#at risk at t) per event time."""
    log_times = np.asarray(log_times, float)
    events = np.asarray(events, bool)
    jump_times = np.unique(log_times[events])
    increments = []
    for t in jump_times:
        d = int(np.sum(events & (log_times == t)))
        r = int(np.sum(log_times >= t))
        increments.append(d / r)
    return jump_times, np.array(increments)


def normal_rho_reference(u):
    """50-digit evaluation of pdf(u)/(1-cdf(u)) - u."""
    with mpmath.workdps(50):
        mu = mpmath.mpf(u)
        pdf = mpmath.npdf(mu)
        sf = mpmath.ncdf(-mu)
        return float(pdf / sf - mu)


# ---------------------------------------------------------------- weights

class TestWeightEval:
    def test_logrank_is_unit(self):
        assert weight_eval(WeightSpec.LOG_RANK, 0.0) == (1.0, 1.0)
        assert weight_eval(WeightSpec.LOG_RANK, -3.7) == (1.0, -2.7)

    def test_gehan_uses_at_risk_fraction(self):
        assert weight_eval(WeightSpec.GEHAN, 2.0, 0.5) == (0.5, 2.0)

    def test_gehan_requires_fraction(self):
        with pytest.raises(InvalidInputError):
            weight_eval(WeightSpec.GEHAN, 1.0)

    def test_normal_at_zero(self):
        rb, rg = weight_eval(WeightSpec.NORMAL, 0.0)
        assert rb == pytest.approx(math.sqrt(2.0 / math.pi), rel=1e-15)
        assert rg == 1.0

    @pytest.mark.parametrize(
        "u", [-40.0, -8.0, -1.0, 0.0, 0.5, 1.0, 5.0, 8.0, 20.0, 50.0, 99.0, 100.0, 101.0, 500.0, 1e4]
    )
    def test_normal_matches_high_precision(self, u):
        rb, _ = weight_eval(WeightSpec.NORMAL, u)
        ref = normal_rho_reference(u)
        assert rb == pytest.approx(ref, rel=1e-10)

    @given(st.floats(-30, 300))
    @settings(max_examples=200)
    def test_normal_finite_and_gamma_identity(self, u):
        rb, rg = weight_eval(WeightSpec.NORMAL, u)
        assert math.isfinite(rb) and math.isfinite(rg)
        assert rg == rb * u + 1.0

    def test_vectorized_agrees_with_scalar(self):
        u = np.array([-2.0, 0.0, 3.0, 150.0])
        rb, rg = weight_eval(WeightSpec.NORMAL, u)
        for k, uk in enumerate(u):
            sb, sg = weight_eval(WeightSpec.NORMAL, float(uk))
            assert rb[k] == sb and rg[k] == sg


# ---------------------------------------------------------------- risk summary

class TestRiskSummary:
    def test_both_at_risk(self):
        data = dataset([0.0, 1.0], x=np.array([[0.0], [1.0]]))
        rs = risk_summary(data, Theta(beta=[0.0], gamma=[]), 0.0)
        assert rs.d0 == 1.0 and rs.eta_beta == pytest.approx([0.5])

    def test_one_at_risk(self):
        data = dataset([0.0, 1.0], x=np.array([[0.0], [1.0]]))
        rs = risk_summary(data, Theta(beta=[0.0], gamma=[]), 1.0)
        assert rs.d0 == 0.5 and rs.eta_beta == pytest.approx([1.0])

    def test_single_subject(self):
        data = dataset([0.3], x=np.array([[2.0]]), z=np.array([[1.5]]))
        th = Theta(beta=[0.0], gamma=[0.0])
        rs = risk_summary(data, th, 0.3)
        assert rs.d0 == 1.0
        assert rs.eta_beta == pytest.approx([2.0]) and rs.eta_gamma == pytest.approx([1.5])

    def test_empty_risk_set_raises(self):
        data = dataset([0.0, 1.0], x=np.array([[0.0], [1.0]]))
        with pytest.raises(EmptyRiskSetError):
            risk_summary(data, Theta(beta=[0.0], gamma=[]), 2.0)

    def test_ties_are_in_risk_set(self):
        data = dataset([1.0, 1.0, 0.0], x=np.array([[1.0], [2.0], [3.0]]))
        rs = risk_summary(data, Theta(beta=[0.0], gamma=[]), 1.0)
        assert rs.d0 == pytest.approx(2.0 / 3.0)
        assert rs.eta_beta == pytest.approx([1.5])


# ---------------------------------------------------------------- hazard

class TestNelsonAalen:
    def test_three_distinct_events(self):
        data = dataset([-1.0, 0.0, 1.0], z=np.zeros((3, 1)))
        hz = nelson_aalen(data, Theta(beta=[], gamma=[0.0]), math.inf)
        assert hz.times == pytest.approx([-1.0, 0.0, 1.0])
        assert hz.increments == pytest.approx([1 / 3, 1 / 2, 1.0])
        assert hz.cumulative == pytest.approx([1 / 3, 5 / 6, 11 / 6])

    def test_all_censored(self):
        data = dataset([0.0, 1.0], events=[False, False], z=np.zeros((2, 1)))
        hz = nelson_aalen(data, Theta(beta=[], gamma=[0.0]), math.inf)
        assert hz.times.size == 0 and hz.evaluate(5.0) == 0.0

    def test_tied_events_share_one_jump(self):
        data = dataset([0.0, 0.0], z=np.zeros((2, 1)))
        hz = nelson_aalen(data, Theta(beta=[], gamma=[0.0]), math.inf)
        assert hz.times == pytest.approx([0.0]) and hz.increments == pytest.approx([1.0])

    def test_truncation_drops_late_jumps(self):
        data = dataset([-1.0, 0.0, 1.0], z=np.zeros((3, 1)))
        hz = nelson_aalen(data, Theta(beta=[], gamma=[0.0]), 0.5)
        assert hz.times == pytest.approx([-1.0, 0.0])

    def test_matches_brute_force_oracle(self, rng):
        th = Theta.zeros(1, 1)
        for _ in range(50):
            n = int(rng.integers(2, 21))
            data = random_dataset(rng, n, 1, 1)
            hz = nelson_aalen(data, th, math.inf)
            t_ref, inc_ref = brute_force_nelson_aalen(data.log_time, data.event)
            assert np.array_equal(hz.times, t_ref)
            assert np.allclose(hz.increments, inc_ref, rtol=0, atol=0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_nondecreasing_for_any_theta(self, seed):
        r = np.random.default_rng(seed)
        data = random_dataset(r, int(r.integers(2, 15)), 1, 1)
        th = Theta(beta=r.normal(size=1), gamma=r.normal(size=1) * 0.5)
        hz = nelson_aalen(data, th, math.inf)
        cum = hz.cumulative
        assert np.all(np.diff(cum) > 0) if cum.size > 1 else True

    def test_step_hazard_validation(self):
        with pytest.raises(InvalidInputError):
            StepHazard(times=np.array([1.0, 0.5]), increments=np.array([0.1, 0.1]))
        with pytest.raises(InvalidInputError):
            StepHazard(times=np.array([0.0]), increments=np.array([-0.1]))


# ---------------------------------------------------------------- score

class TestScore:
    def test_two_point_worked_example(self):
        data = dataset([0.0, 1.0], x=np.array([[0.0], [1.0]]))
        psi = score(data, Theta(beta=[0.0], gamma=[]), EstimatorConfig())
        assert psi == pytest.approx([-0.25])

    def test_no_events_gives_zero(self, rng):
        data = random_dataset(rng, 5, 2, 1)
        data = SurvivalDataset(
            log_time=data.log_time, event=np.zeros(5, bool), x=data.x, z=data.z
        )
        psi = score(data, Theta.zeros(2, 1), EstimatorConfig())
        assert np.array_equal(psi, np.zeros(3))

    def test_constant_covariate_gives_zero(self):
        c = -2.3
        data = dataset([0.0, 1.0], x=np.full((2, 1), c))
        psi = score(data, Theta(beta=[0.0], gamma=[]), EstimatorConfig())
        assert psi == pytest.approx([0.0], abs=1e-16)

    def test_objective_is_norm(self, rng):
        data = random_dataset(rng, 12, 2, 1)
        th = Theta(beta=[0.2, -0.1], gamma=[0.3])
        cfg = EstimatorConfig()
        assert objective(data, th, cfg) == pytest.approx(
            float(np.linalg.norm(score(data, th, cfg))), rel=1e-15
        )

    def test_matches_brute_force_logrank(self, rng):
        cfg = EstimatorConfig()
        for _ in range(100):
            n = int(rng.integers(3, 21))
            data = random_dataset(rng, n, 2, 0)
            beta = rng.normal(size=2)
            psi = score(data, Theta(beta=beta, gamma=[]), cfg)
            ref = brute_force_logrank_score(data, beta)
            assert np.allclose(psi, ref, atol=1e-12, rtol=0)

    def test_matches_brute_force_logrank_truncated(self, rng):
        for _ in range(30):
            n = int(rng.integers(3, 21))
            data = random_dataset(rng, n, 1, 0)
            beta = rng.normal(size=1)
            tau = float(rng.normal())
            if not np.any(data.log_time + data.x @ beta >= tau):
                continue
            psi = score(data, Theta(beta=beta, gamma=[]), EstimatorConfig(tau=tau))
            ref = brute_force_logrank_score(data, beta, tau)
            assert np.allclose(psi, ref, atol=1e-12, rtol=0)

    def test_matches_pairwise_gehan(self, rng):
        cfg = EstimatorConfig(weight=WeightSpec.GEHAN)
        for _ in range(30):
            n = int(rng.integers(3, 11))
            data = random_dataset(rng, n, 2, 0)
            beta = rng.normal(size=2)
            psi = score(data, Theta(beta=beta, gamma=[]), cfg)
            ref = brute_force_gehan_score(data, beta)
            assert np.allclose(psi, ref, atol=1e-12, rtol=0)

    def test_piecewise_constant_in_theta(self, rng):
        # log-rank score depends on theta only through the residual ordering
        cfg = EstimatorConfig()
        for _ in range(20):
            data = random_dataset(rng, 10, 1, 0)
            beta = rng.normal(size=1)
            eps = np.sort(data.log_time + data.x @ beta)
            gap = np.min(np.diff(eps))
            if gap <= 0:
                continue
            span = np.max(np.abs(data.x)) + 1e-9
            delta = 0.25 * gap / span
            base = score(data, Theta(beta=beta, gamma=[]), cfg)
            bumped = score(data, Theta(beta=beta + delta, gamma=[]), cfg)
            assert np.array_equal(base, bumped)

    def test_permutation_invariance(self, rng):
        data = random_dataset(rng, 15, 2, 1)
        perm = rng.permutation(15)
        shuffled = SurvivalDataset(
            log_time=data.log_time[perm], event=data.event[perm], x=data.x[perm], z=data.z[perm]
        )
        th = Theta(beta=[0.4, -0.2], gamma=[0.1])
        for w in WeightSpec:
            cfg = EstimatorConfig(weight=w)
            assert score(data, th, cfg) == pytest.approx(score(shuffled, th, cfg), rel=1e-12)
