import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from scipy import stats

from app.core.errors import ConfigError, ExactnessBudgetError, RepresentationMismatchError
from app.models.systems import (
    BallSpec,
    ExactBits,
    ExactRational2D,
    Float1D,
    Float2D,
    Metric,
    SystemConfig,
    SystemKind,
)
from app.services.systems_service import (
    annulus_ratio,
    apply,
    apply_n,
    ball_measure,
    birkhoff_ball_masses,
    cat_power,
    default_a_frak,
    distance,
    exact_ball_mass,
    iterate_array,
    make_system,
    metric_distance,
    sample_invariant,
    sample_invariant_many,
    short_return_horizon,
    state_values,
    step_array,
)


def third(length: int) -> ExactBits:
    """1/3 = 0.010101... truncated to an even number of digits."""
    return ExactBits(digits=int("01" * (length // 2), 2), length=length)


class TestMakeSystem:
    @pytest.mark.parametrize(
        "config, expected",
        [
            (SystemConfig(kind=SystemKind.DOUBLING), 2.5),
            (SystemConfig(kind=SystemKind.CAT_MAP), 3.0 + math.sqrt(5.0)),
            (SystemConfig(kind=SystemKind.INTERMITTENT, alpha_pm=0.2), 3.2),
            (SystemConfig(kind=SystemKind.GAUSS), 17.0),
        ],
    )
    def test_default_lipschitz(self, config, expected):
        assert make_system(config).lipschitz_A == pytest.approx(expected, rel=1e-12)

    def test_explicit_lipschitz_wins(self):
        assert make_system(SystemConfig(kind=SystemKind.DOUBLING, lipschitz_A=4.0)).lipschitz_A == 4.0

    def test_cat_map_rejects_interval_metric(self):
        with pytest.raises(ConfigError):
            make_system(SystemConfig(kind=SystemKind.CAT_MAP, metric=Metric.INTERVAL))

    def test_intermittent_needs_alpha(self):
        with pytest.raises(ConfigError):
            make_system(SystemConfig(kind=SystemKind.INTERMITTENT))

    def test_horizon_for_doubling(self, doubling):
        assert short_return_horizon(2.0**-12, default_a_frak(doubling)) == 2


class TestApply:
    def test_fixed_points(self, doubling, cat, intermittent, gauss):
        assert apply(doubling, Float1D(x=0.0)) == Float1D(x=0.0)
        assert apply(cat, ExactRational2D(p=0, q=0, denominator=7)) == ExactRational2D(p=0, q=0, denominator=7)
        assert apply(gauss, Float1D(x=0.0)) == Float1D(x=0.0)
        golden = (math.sqrt(5.0) - 1.0) / 2.0
        assert apply(gauss, Float1D(x=golden)).x == pytest.approx(golden, abs=1e-12)

    def test_intermittent_right_branch(self, intermittent):
        assert apply(intermittent, Float1D(x=0.75)).x == 0.5

    def test_zero_iterations_is_identity(self, doubling, cat):
        x = third(64)
        assert apply_n(doubling, x, 0) == x
        y = ExactRational2D(p=3, q=4, denominator=11)
        assert apply_n(cat, y, 0) == y

    def test_doubling_period_two(self, doubling):
        x = third(128)
        y = apply_n(doubling, x, 2)
        assert y.length == 126
        assert y.value == pytest.approx(1.0 / 3.0, abs=1e-15)
        assert distance(doubling, x, y) < 2.0**-120

    def test_doubling_consumes_digits(self, doubling):
        with pytest.raises(ExactnessBudgetError):
            apply_n(doubling, third(16), 16)

    def test_cat_orbit_closes_mod_5(self, cat):
        # M^5 = -I modulo 5, so every point with denominator 5 has period dividing 10
        x = ExactRational2D(p=1, q=2, denominator=5)
        assert apply_n(cat, x, 10) == x
        assert apply_n(cat, x, 5) == ExactRational2D(p=4, q=3, denominator=5)

    def test_cat_rational_matches_float(self, cat):
        exact = apply_n(cat, ExactRational2D(p=3, q=7, denominator=64), 3)
        approx = apply_n(cat, Float2D(x=3 / 64, y=7 / 64), 3)
        assert exact.value == pytest.approx(approx.value, abs=1e-12)

    @pytest.mark.parametrize(
        "system_fixture, point",
        [
            ("cat", Float1D(x=0.1)),
            ("doubling", Float2D(x=0.1, y=0.2)),
            ("gauss", ExactBits(digits=1, length=4)),
        ],
    )
    def test_representation_mismatch(self, request, system_fixture, point):
        with pytest.raises(RepresentationMismatchError):
            apply(request.getfixturevalue(system_fixture), point)

    @given(n=st.integers(min_value=0, max_value=200))
    def test_cat_power_inverse(self, n):
        forward = np.array(cat_power(n, 2**31 - 1), dtype=object)
        backward = np.array(cat_power(n, 2**31 - 1, backward=True), dtype=object)
        assert ((forward.dot(backward)) % (2**31 - 1)).tolist() == [[1, 0], [0, 1]]


class TestDistance:
    def test_circle_wraps(self, doubling):
        assert distance(doubling, Float1D(x=0.1), Float1D(x=0.9)) == pytest.approx(0.2, abs=1e-12)

    def test_torus_max(self, cat):
        assert distance(cat, Float2D(x=0.0, y=0.0), Float2D(x=0.5, y=0.5)) == 0.5
        assert distance(cat, ExactRational2D(p=0, q=0, denominator=2), ExactRational2D(p=1, q=1, denominator=2)) == 0.5

    def test_torus_euclid(self, cat_euclid):
        d = distance(cat_euclid, ExactRational2D(p=0, q=0, denominator=10), ExactRational2D(p=3, q=4, denominator=10))
        assert d == pytest.approx(0.5, abs=1e-15)

    def test_mixed_representations_rejected(self, doubling):
        with pytest.raises(RepresentationMismatchError):
            distance(doubling, Float1D(x=0.25), ExactBits(digits=1, length=2))

    @given(x=st.floats(min_value=0.0, max_value=0.999), y=st.floats(min_value=0.0, max_value=0.999))
    def test_circle_metric_properties(self, x, y):
        system = make_system(SystemConfig(kind=SystemKind.DOUBLING))
        a, b = Float1D(x=x), Float1D(x=y)
        assert distance(system, a, a) == 0.0
        assert distance(system, a, b) == distance(system, b, a)
        assert 0.0 <= distance(system, a, b) <= 0.5


class TestMeasures:
    def test_lebesgue_circle(self, doubling):
        ball = BallSpec(center=Float1D(x=0.3), radius_rho=0.01, metric=Metric.TORUS_MAX)
        assert ball_measure(doubling, ball).value == pytest.approx(0.02, abs=1e-15)

    def test_lebesgue_torus_max(self, cat):
        ball = BallSpec(center=Float2D(x=0.3, y=0.7), radius_rho=0.01, metric=Metric.TORUS_MAX)
        assert ball_measure(cat, ball).value == pytest.approx(0.0004, abs=1e-15)

    def test_lebesgue_torus_euclid(self, cat_euclid):
        assert exact_ball_mass(cat_euclid, np.array([0.1, 0.1]), 0.1) == pytest.approx(math.pi * 0.01)
        with pytest.raises(ConfigError):
            exact_ball_mass(cat_euclid, np.array([0.1, 0.1]), 0.6)

    def test_gauss_interval(self, gauss):
        assert exact_ball_mass(gauss, np.float64(0.5), 0.1) == pytest.approx(math.log2(1.6 / 1.4))
        assert exact_ball_mass(gauss, np.float64(0.5), 0.5) == pytest.approx(1.0)

    def test_whole_circle(self, doubling):
        assert exact_ball_mass(doubling, np.float64(0.2), 0.5) == 1.0

    def test_annulus_ratio(self, doubling):
        ball = BallSpec(center=Float1D(x=0.4), radius_rho=0.01, metric=Metric.TORUS_MAX)
        assert annulus_ratio(doubling, ball, 2.0) == pytest.approx(2.0 * 0.01, rel=1e-9)

    def test_birkhoff_seeds_agree(self, intermittent):
        a, se_a = birkhoff_ball_masses(intermittent, [0.3], 0.02, seed=1)
        b, se_b = birkhoff_ball_masses(intermittent, [0.3], 0.02, seed=2)
        assert abs(a[0] - b[0]) <= 4.0 * math.hypot(se_a[0], se_b[0])

    def test_intermittent_mass_piles_up_near_zero(self, intermittent):
        values, _ = birkhoff_ball_masses(intermittent, [0.05], 0.05, seed=3)
        assert values[0] > 0.1


class TestSampling:
    def test_sample_is_deterministic(self, doubling, cat, intermittent):
        for system in (doubling, cat, intermittent):
            assert sample_invariant(system, 11, horizon=8) == sample_invariant(system, 11, horizon=8)

    def test_doubling_sample_carries_horizon_digits(self, doubling):
        x = sample_invariant(doubling, 4, horizon=100)
        assert x.length == 164

    def test_uniform_mean(self, doubling):
        values = state_values(doubling, sample_invariant_many(doubling, 5, 200_000))
        assert values.mean() == pytest.approx(0.5, abs=0.002)

    def test_gauss_mean(self, gauss):
        values = state_values(gauss, sample_invariant_many(gauss, 6, 200_000))
        assert values.mean() == pytest.approx(1.0 / math.log(2.0) - 1.0, abs=0.002)

    def test_streams_differ(self, cat):
        a = sample_invariant_many(cat, 7, 5, stream=(1,))
        b = sample_invariant_many(cat, 7, 5, stream=(2,))
        assert not np.array_equal(a, b)


class TestInvariantMeasure:
    SAMPLES = 100_000
    STEPS = 10

    def test_doubling_preserves_lebesgue(self, doubling):
        x = iterate_array(doubling, np.random.default_rng(41).random(self.SAMPLES), self.STEPS)
        assert stats.kstest(x, "uniform").pvalue > 0.01

    def test_cat_preserves_lebesgue(self, cat):
        x = iterate_array(cat, np.random.default_rng(43).random((self.SAMPLES, 2)), self.STEPS)
        assert stats.kstest(x[:, 0], "uniform").pvalue > 0.01
        assert stats.kstest(x[:, 1], "uniform").pvalue > 0.01

    def test_gauss_preserves_its_measure(self, gauss):
        x0 = sample_invariant_many(gauss, 47, self.SAMPLES)
        x = iterate_array(gauss, x0, self.STEPS)
        assert stats.kstest(x, lambda v: np.log2(1.0 + v)).pvalue > 0.01


class TestLipschitzConstant:
    PAIRS = 10_000

    @pytest.mark.parametrize("system_fixture", ["doubling", "cat", "cat_euclid", "intermittent"])
    def test_random_pairs(self, request, system_fixture):
        system = request.getfixturevalue(system_fixture)
        rng = np.random.default_rng(53)
        shape = (self.PAIRS, 2) if system.dimension == 2 else (self.PAIRS,)
        x, y = rng.random(shape), rng.random(shape)
        before = metric_distance(system.metric, x, y)
        after = metric_distance(system.metric, step_array(system, x), step_array(system, y))
        assert np.all(after <= system.lipschitz_A * before + 1e-12)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_gauss_pairs_in_one_branch(self, gauss, k):
        # A bounds |T'| only on [GAUSS_CUTOFF, 1]; pairs straddling a branch point or
        # sitting near 0 can be stretched without limit
        rng = np.random.default_rng(59 + k)
        lo, hi = 1.0 / (k + 1), 1.0 / k
        x, y = rng.uniform(lo, hi, self.PAIRS), rng.uniform(lo, hi, self.PAIRS)
        before = metric_distance(gauss.metric, x, y)
        after = metric_distance(gauss.metric, step_array(gauss, x), step_array(gauss, y))
        assert np.all(after <= gauss.lipschitz_A * before + 1e-12)

    def test_gauss_stretches_past_A_near_zero(self, gauss):
        x, y = Float1D(x=0.05), Float1D(x=0.0501)
        assert distance(gauss, apply(gauss, x), apply(gauss, y)) > gauss.lipschitz_A * distance(gauss, x, y)


class TestExactComposition:
    @given(
        digits=st.integers(min_value=0, max_value=2**200 - 1),
        a=st.integers(min_value=0, max_value=90),
        b=st.integers(min_value=0, max_value=90),
    )
    @hsettings(deadline=None)
    def test_doubling_bits(self, digits, a, b):
        system = make_system(SystemConfig(kind=SystemKind.DOUBLING))
        x = ExactBits(digits=digits, length=200)
        assert apply_n(system, x, a + b) == apply_n(system, apply_n(system, x, a), b)

    @given(
        denominator=st.integers(min_value=1, max_value=10**30),
        p=st.integers(min_value=0),
        q=st.integers(min_value=0),
        a=st.integers(min_value=0, max_value=500),
        b=st.integers(min_value=0, max_value=500),
    )
    @hsettings(deadline=None)
    def test_cat_rationals(self, denominator, p, q, a, b):
        system = make_system(SystemConfig(kind=SystemKind.CAT_MAP))
        x = ExactRational2D(p=p % denominator, q=q % denominator, denominator=denominator)
        assert apply_n(system, x, a + b) == apply_n(system, apply_n(system, x, a), b)
