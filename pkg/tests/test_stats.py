import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from app.core.config import settings
from app.core.errors import ConfigError, InsufficientDataError
from app.models.stats import EmpiricalPmf
from app.services.chenstein_service import binomial_poisson_tv
from app.services.stats_service import (
    bootstrap_ci,
    empirical_pmf,
    fit_log_decay,
    poisson_distances,
    poisson_pmf,
    poisson_pmf_vector,
    sup_distance,
    tv_distance,
    tv_to_poisson,
)

pmf_vectors = st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=12).filter(
    lambda v: sum(v) > 0
).map(lambda v: (np.asarray(v) / sum(v)).tolist())


class TestEmpiricalPmf:
    def test_point_mass(self):
        pmf = empirical_pmf([0, 0, 0, 0])
        assert pmf.masses[0] == 1.0
        assert pmf.k_max == settings.HISTOGRAM_GUARD

    def test_two_values(self):
        masses = empirical_pmf([1, 2, 1, 2]).masses
        assert masses[1] == masses[2] == 0.5
        assert masses.sum() == 1.0

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            empirical_pmf([])

    def test_negative_counts(self):
        with pytest.raises(ConfigError):
            empirical_pmf([1, -1])


class TestPoisson:
    def test_values(self):
        assert poisson_pmf(1.0, 0) == pytest.approx(math.exp(-1.0), rel=1e-15)
        assert poisson_pmf(2.0, 2) == pytest.approx(2.0 * math.exp(-2.0), rel=1e-14)
        assert poisson_pmf(2.0, -1) == 0.0

    def test_matches_scipy_far_out(self):
        np.testing.assert_allclose(poisson_pmf_vector(30.0, 200), stats.poisson.pmf(np.arange(201), 30.0), rtol=1e-10)

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(ConfigError):
            poisson_pmf_vector(0.0, 5)

    @given(t=st.floats(min_value=0.01, max_value=50.0), k=st.integers(min_value=0, max_value=100))
    def test_ratio(self, t, k):
        assert poisson_pmf(t, k + 1) == pytest.approx(poisson_pmf(t, k) * t / (k + 1), rel=1e-9, abs=1e-300)


class TestDistances:
    def test_exact_poisson_has_no_sup_gap(self):
        assert sup_distance(poisson_pmf_vector(1.0, 50), 1.0) < 1e-60

    def test_point_mass_at_zero(self):
        pmf = EmpiricalPmf(counts=[1.0], total=1.0)
        assert sup_distance(pmf, 1.0) == pytest.approx(1.0 - math.exp(-1.0), rel=1e-14)

    def test_tail_beyond_the_histogram(self):
        # all mass at 0 while Poi_20 lives near 20
        assert sup_distance([1.0], 20.0) == pytest.approx(1.0 - math.exp(-20.0))
        assert sup_distance([0.0, 0.0, 1.0], 20.0) >= stats.poisson.pmf(20, 20.0) - 1e-15

    def test_tv_extremes(self):
        assert tv_distance([0.2, 0.8], [0.2, 0.8]).tv == 0.0
        assert tv_distance([1.0, 0.0], [0.0, 1.0]).tv == 1.0
        assert tv_distance([1.0], [0.0, 1.0]).l1 == 2.0

    def test_poisson_samples_are_close(self):
        rng = np.random.default_rng(0)
        samples = stats.poisson.ppf(rng.random(100_000), 1.0).astype(int)
        assert tv_to_poisson(empirical_pmf(samples), 1.0).tv < 0.01

    def test_binomial_against_poisson(self):
        binom = stats.binom.pmf(np.arange(101), 100, 0.01)
        l1 = tv_to_poisson(binom, 1.0).l1
        assert l1 == pytest.approx(binomial_poisson_tv(100, 1.0).exact_tv, abs=1e-12)
        assert l1 <= 0.02

    @given(samples=st.lists(st.integers(min_value=0, max_value=15), min_size=1, max_size=60))
    def test_sup_below_l1(self, samples):
        pmf = empirical_pmf(samples)
        assert sup_distance(pmf, 2.0) <= tv_to_poisson(pmf, 2.0).l1 + 1e-12

    @given(p=pmf_vectors, q=pmf_vectors, r=pmf_vectors)
    def test_tv_is_a_metric(self, p, q, r):
        pq = tv_distance(p, q).tv
        assert pq == pytest.approx(tv_distance(q, p).tv, abs=1e-15)
        assert 0.0 <= pq <= 1.0 + 1e-12
        assert pq <= tv_distance(p, r).tv + tv_distance(r, q).tv + 1e-12


class TestDecayFit:
    def test_recovers_power_of_log(self):
        radii = [2.0**-k for k in (4, 6, 8, 10, 12)]
        fit = fit_log_decay([(rho, abs(math.log(rho)) ** -2) for rho in radii])
        assert fit.kappa_hat == pytest.approx(2.0, abs=1e-9)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-9)

    def test_flat_errors(self):
        fit = fit_log_decay([(0.1, 0.05), (0.01, 0.05), (0.001, 0.05)])
        assert fit.kappa_hat == pytest.approx(0.0, abs=1e-9)

    def test_zero_errors_are_dropped(self):
        points = [(0.1, 0.3), (0.05, 0.2), (0.01, 0.1), (0.001, 0.0)]
        fit = fit_log_decay(points)
        assert fit.dropped == 1
        assert len(fit.points) == 3

    def test_needs_three_radii(self):
        with pytest.raises(InsufficientDataError):
            fit_log_decay([(0.1, 0.3), (0.01, 0.1)])
        with pytest.raises(InsufficientDataError):
            fit_log_decay([(0.1, 0.3), (0.01, 0.1), (0.001, 0.0)])


class TestBootstrap:
    def test_is_deterministic(self):
        samples = np.random.default_rng(1).poisson(1.0, 500)
        first = bootstrap_ci(samples, np.mean, seed=3, resamples=50)
        assert first == bootstrap_ci(samples, np.mean, seed=3, resamples=50)
        assert first.low <= first.high

    def test_no_resamples(self):
        ci = bootstrap_ci([1, 2, 3], np.mean, seed=3, resamples=0)
        assert ci.low == ci.value == ci.high == 2.0

    def test_poisson_distances(self):
        samples = np.random.default_rng(2).poisson(1.0, 2000)
        sup, tv = poisson_distances(samples, 1.0, seed=4, resamples=40)
        assert sup.low <= sup.high
        assert tv.value < 0.05
