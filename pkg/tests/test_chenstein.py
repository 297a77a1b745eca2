import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from scipy import stats

from app.core.errors import ConfigError, HypothesisViolationError, InsufficientDataError
from app.models.chenstein import ChenSteinInputs, EmpiricalSamples, IIDBernoulli, TwoStateMarkov
from app.services.chenstein_service import (
    binomial_poisson_tv,
    chen_stein_bound,
    chen_stein_report,
    compute_eps,
    compute_R1,
    compute_R2,
    deviation_report,
    enumerate_S_pmf,
    exact_S_pmf,
    stationary_law,
)

STICKY = TwoStateMarkov(transition=[[0.9, 0.1], [0.5, 0.5]])


def all_paths(N: int) -> np.ndarray:
    return np.array(list(itertools.product([0, 1], repeat=N)))


def path_probabilities(model: TwoStateMarkov, paths: np.ndarray) -> np.ndarray:
    P = np.asarray(model.transition)
    pi = stationary_law(model)
    return pi[paths[:, 0]] * np.prod(P[paths[:, :-1], paths[:, 1:]], axis=1)


def brute_force_R1(model: TwoStateMarkov, N: int, p: int) -> float:
    paths = all_paths(N)
    probs = path_probabilities(model, paths)
    eps = stationary_law(model)[1]
    best = 0.0
    for j in range(1, N - p):
        window = paths[:, p : N - j].sum(axis=1)
        for q in range(1, N - p - j):
            joint = probs[(paths[:, 0] == 1) & (window == q)].sum()
            marginal = probs[window == q].sum()
            best = max(best, abs(joint - eps * marginal))
    return best


class TestLawOfS:
    def test_iid_is_binomial(self):
        pmf = exact_S_pmf(IIDBernoulli(eps=0.2), 30)
        np.testing.assert_allclose(pmf, stats.binom.pmf(np.arange(31), 30, 0.2), atol=1e-15)

    def test_markov_with_identical_rows_is_binomial(self):
        model = TwoStateMarkov(transition=[[0.7, 0.3], [0.7, 0.3]])
        np.testing.assert_allclose(exact_S_pmf(model, 25), stats.binom.pmf(np.arange(26), 25, 0.3), atol=1e-12)

    @pytest.mark.parametrize("N", [1, 2, 7, 15])
    def test_dynamic_program_matches_enumeration(self, N):
        np.testing.assert_allclose(exact_S_pmf(STICKY, N), enumerate_S_pmf(STICKY, N), atol=1e-12)

    def test_non_stationary_start(self):
        model = TwoStateMarkov(transition=[[0.6, 0.4], [0.2, 0.8]], initial=[1.0, 0.0])
        np.testing.assert_allclose(exact_S_pmf(model, 10), enumerate_S_pmf(model, 10), atol=1e-12)

    def test_sums_to_one(self):
        assert exact_S_pmf(STICKY, 500).sum() == pytest.approx(1.0, abs=1e-12)

    def test_budgets(self):
        with pytest.raises(ConfigError):
            exact_S_pmf(STICKY, 20_000)
        with pytest.raises(ConfigError):
            enumerate_S_pmf(STICKY, 21)
        with pytest.raises(ConfigError):
            exact_S_pmf(EmpiricalSamples(trajectories=[[0, 1]]), 2)


class TestEps:
    def test_models(self):
        assert compute_eps(IIDBernoulli(eps=0.01)).value == 0.01
        assert compute_eps(STICKY).value == pytest.approx(1.0 / 6.0, abs=1e-15)

    def test_all_zero_samples(self):
        estimate = compute_eps(EmpiricalSamples(trajectories=[[0, 0, 0]] * 10))
        assert estimate.value == 0.0
        assert estimate.se == 0.0


class TestDependenceTerms:
    def test_iid_has_no_long_range_term(self):
        assert compute_R1(IIDBernoulli(eps=0.3), 20, 3).value == 0.0

    def test_identical_rows_decouple(self):
        model = TwoStateMarkov(transition=[[0.6, 0.4], [0.6, 0.4]])
        assert compute_R1(model, 12, 2).value == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("N, p", [(8, 2), (12, 3), (15, 3)])
    def test_markov_R1_matches_enumeration(self, N, p):
        result = compute_R1(STICKY, N, p)
        assert result.value == pytest.approx(brute_force_R1(STICKY, N, p), abs=1e-12)
        assert 1 <= result.j < N - p
        assert 1 <= result.q < N - p - result.j

    def test_gap_limits(self):
        with pytest.raises(HypothesisViolationError):
            compute_R1(STICKY, 10, 1)
        with pytest.raises(InsufficientDataError):
            compute_R1(STICKY, 10, 9)

    def test_R2_closed_forms(self):
        assert compute_R2(IIDBernoulli(eps=0.1), 4) == pytest.approx(3 * 0.01)
        pi1 = 1.0 / 6.0
        assert compute_R2(STICKY, 2) == pytest.approx(pi1 * 0.5, rel=1e-12)

    def test_markov_R2_matches_enumeration(self):
        paths = all_paths(5)
        probs = path_probabilities(STICKY, paths)
        expected = sum(probs[(paths[:, 0] == 1) & (paths[:, n - 1] == 1)].sum() for n in range(2, 6))
        assert compute_R2(STICKY, 5) == pytest.approx(expected, abs=1e-14)

    def test_empirical_uniform_paths(self):
        model = EmpiricalSamples(trajectories=all_paths(8).tolist())
        assert compute_eps(model).value == 0.5
        assert compute_R1(model, 8, 2).value == 0.0
        assert compute_R2(model, 4) == pytest.approx(3 * 0.25)


class TestBound:
    @pytest.mark.parametrize("t, eps", [(1.0, 0.01), (2.0, 0.01), (1.5, 0.05)])
    def test_independent_gap_two(self, t, eps):
        N = math.floor(t / eps)
        inputs = ChenSteinInputs(eps=eps, N=N, t_param=t, p_gap=2, R1=0.0, R2=0.0)
        assert chen_stein_bound(inputs, 1) == pytest.approx(12 * t * eps + 2 * t**2 / N, rel=1e-12)

    def test_scales_with_set_size(self):
        inputs = ChenSteinInputs(eps=0.01, N=100, t_param=1.0, p_gap=3, R1=0.001, R2=0.002)
        one = chen_stein_bound(inputs, 1)
        five = chen_stein_bound(inputs, 5)
        assert five - one == pytest.approx(4 * (one - 2 * 1.0 / 100), rel=1e-12)

    @pytest.mark.parametrize(
        "inputs",
        [
            ChenSteinInputs(eps=0.6, N=1, t_param=1.0, p_gap=2, R1=0.0, R2=0.0),
            ChenSteinInputs(eps=0.01, N=100, t_param=1.0, p_gap=1, R1=0.0, R2=0.0),
            ChenSteinInputs(eps=0.01, N=100, t_param=1.0, p_gap=100, R1=0.0, R2=0.0),
            ChenSteinInputs(eps=0.01, N=90, t_param=1.0, p_gap=2, R1=0.0, R2=0.0),
        ],
    )
    def test_hypotheses_are_checked(self, inputs):
        with pytest.raises(HypothesisViolationError):
            chen_stein_bound(inputs, 1)

    @given(
        eps=st.floats(min_value=0.01, max_value=0.2),
        t=st.floats(min_value=1.0, max_value=5.0),
        R1=st.floats(min_value=0.0, max_value=1.0),
        R2=st.floats(min_value=0.0, max_value=1.0),
        bump=st.floats(min_value=0.0, max_value=1.0),
        E=st.integers(min_value=0, max_value=50),
    )
    @hsettings(max_examples=200)
    def test_monotone(self, eps, t, R1, R2, bump, E):
        N = math.floor(t / eps)
        base = ChenSteinInputs(eps=eps, N=N, t_param=t, p_gap=2, R1=R1, R2=R2)
        value = chen_stein_bound(base, E)
        assert value >= 0.0
        assert chen_stein_bound(base.model_copy(update={"R1": R1 + bump}), E) >= value
        assert chen_stein_bound(base.model_copy(update={"R2": R2 + bump}), E) >= value
        assert chen_stein_bound(base, E + 1) >= value
        assert chen_stein_bound(base.model_copy(update={"p_gap": min(3, N - 1)}), E) >= value


class TestReports:
    def test_iid_example_holds(self):
        report = chen_stein_report(IIDBernoulli(eps=0.01), 1.0, 2)
        assert report.N == 100
        deviation = abs(stats.binom.pmf(0, 100, 0.01) - math.exp(-1.0))
        assert deviation <= report.bound_total(1)

    def test_markov_deviations_stay_under_the_bound(self):
        t = 15.5 / 6.0
        report = chen_stein_report(STICKY, t, 3)
        assert report.N == 15
        deviations = deviation_report(exact_S_pmf(STICKY, report.N), report)
        assert deviations.singleton_violations == 0
        assert deviations.interval_violations == 0
        assert deviations.max_singleton <= deviations.worst_singleton_bound

    def test_non_stationary_start_is_rejected(self):
        model = TwoStateMarkov(transition=[[0.9, 0.1], [0.5, 0.5]], initial=[1.0, 0.0])
        with pytest.raises(HypothesisViolationError):
            chen_stein_report(model, 2.0, 2)

    def test_stationary_start_is_accepted(self):
        model = TwoStateMarkov(transition=[[0.9, 0.1], [0.5, 0.5]], initial=stationary_law(STICKY).tolist())
        assert chen_stein_report(model, 15.5 / 6.0, 3).N == 15

    @pytest.mark.parametrize("N, t", [(10, 0.5), (10, 2.0), (100, 1.0), (1000, 2.0)])
    def test_binomial_poisson_gap(self, N, t):
        gap = binomial_poisson_tv(N, t)
        assert gap.bound == pytest.approx(2 * t**2 / N)
        assert 0.0 < gap.exact_tv <= gap.bound

    def test_binomial_poisson_vanishing_rate(self):
        assert binomial_poisson_tv(10, 1e-9).exact_tv < 1e-8
