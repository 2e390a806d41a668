from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bandit_lab.exp_family import (
    ArmDistribution,
    BanditInstance,
    DomainError,
    ExpFamilyModel,
    Family,
    bernoulli,
    d_bar,
    d_level_set_sup,
    d_tilde,
    exponential,
    gaussian,
    kl_mean,
    kl_natural,
    poisson,
    sample,
    variance,
)

# high-precision reference values (mpmath, 40 digits)
KL_BERN_005_015 = 0.05073373892130767620
KL_POIS_5_4 = 0.11571775657104877883
KL_EXP_1_3 = 0.43194562200144300622
D_TILDE_005_05_01 = 0.47792543603530803905
LEVEL_BERN_03_02 = 0.61263272402373995853

MODELS = [bernoulli(), gaussian(1.0), gaussian(2.5), poisson(), exponential()]


def interior_means(model, n=7):
    lo, hi = model.mean_domain
    if model.family is Family.BERNOULLI:
        return np.linspace(0.05, 0.95, n)
    if model.family is Family.GAUSSIAN:
        return np.linspace(-3, 3, n)
    return np.linspace(0.2, 5.0, n)


class TestDivergence:
    def test_closed_forms(self):
        assert kl_mean(bernoulli(), 0.05, 0.15) == pytest.approx(KL_BERN_005_015, rel=1e-13)
        assert kl_mean(poisson(), 5.0, 4.0) == pytest.approx(KL_POIS_5_4, rel=1e-13)
        assert kl_mean(exponential(), 1.0, 3.0) == pytest.approx(KL_EXP_1_3, rel=1e-13)
        assert kl_mean(gaussian(2.0), 0.0, 1.0) == pytest.approx(0.25, rel=1e-15)

    def test_boundary_conventions(self):
        b = bernoulli()
        assert kl_mean(b, 0.0, 0.5) == pytest.approx(math.log(2), rel=1e-15)
        assert kl_mean(b, 1.0, 0.5) == pytest.approx(math.log(2), rel=1e-15)
        assert kl_mean(b, 0.3, 1.0) == math.inf
        assert kl_mean(poisson(), 0.0, 2.0) == pytest.approx(2.0)

    def test_natural_and_mean_forms_agree(self):
        for model in MODELS:
            mu = interior_means(model)
            nu = mu[::-1]
            th, lam = model.natural_of(mu), model.natural_of(nu)
            np.testing.assert_allclose(kl_natural(model, th, lam), kl_mean(model, mu, nu), rtol=1e-10, atol=1e-14)

    def test_bernoulli_natural_example(self):
        # theta = 0 is mean 1/2, lambda = log 9 is mean 0.9
        assert kl_natural(bernoulli(), 0.0, math.log(9)) == pytest.approx(kl_mean(bernoulli(), 0.5, 0.9), rel=1e-13)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            kl_mean(bernoulli(), 1.2, 0.5)
        with pytest.raises(DomainError):
            kl_mean(poisson(), -1.0, 2.0)
        with pytest.raises(DomainError):
            kl_natural(exponential(), 0.5, -1.0)
        with pytest.raises(DomainError):
            variance(bernoulli(), 0.0)

    def test_variance(self):
        assert variance(bernoulli(), 0.3) == pytest.approx(0.21)
        assert variance(gaussian(2.0), 7.0) == 2.0
        assert variance(poisson(), 3.0) == 3.0
        assert variance(exponential(), 2.0) == 4.0

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
    def test_bernoulli_nonnegative_and_pinsker(self, p, q):
        d = kl_mean(bernoulli(), p, q)
        assert d >= 0
        assert d >= 2 * (p - q) ** 2 - 1e-15

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.01, 50), st.floats(0.01, 50))
    def test_positive_families_nonnegative(self, p, q):
        for model in (poisson(), exponential()):
            assert kl_mean(model, p, q) >= -1e-15


class TestLevelSet:
    def test_closed_level_examples(self):
        assert d_level_set_sup(bernoulli(), 0.0, math.log(2)) == pytest.approx(0.5, abs=1e-9)
        assert d_level_set_sup(gaussian(1.0), 0.0, 0.5) == pytest.approx(1.0, abs=1e-15)
        assert d_level_set_sup(bernoulli(), 0.3, 0.2) == pytest.approx(LEVEL_BERN_03_02, abs=1e-9)

    def test_level_zero_returns_x(self):
        assert d_level_set_sup(bernoulli(), 0.4, 0.0) == 0.4
        assert d_level_set_sup(poisson(), 2.0, 0.0) == 2.0

    def test_cap(self):
        # the root sits within 1e-40 of 1: the float answer is the last point below it
        assert 1.0 - d_level_set_sup(bernoulli(), 0.9, 10.0) < 1e-14
        assert d_level_set_sup(bernoulli(), 0.3, 10.0, cap=0.8) == 0.8

    @pytest.mark.parametrize("model", [bernoulli(), poisson(), exponential(), gaussian(3.0)])
    def test_inversion_residual(self, model):
        x = interior_means(model)
        for level in (1e-3, 0.1, 1.0, 3.0):
            q = d_level_set_sup(model, x, level)
            # roots closer to mu_max than float resolution are not representable
            inside = q < model.mu_max - 1e-9
            res = np.abs(model.kl(x, q) - level)[inside]
            assert np.all(res <= 1e-9)
            assert np.all(q > x)

    def test_unbounded_bracket_expansion(self):
        q = d_level_set_sup(exponential(), 1.0, 50.0)
        assert q > 1e10 or abs(kl_mean(exponential(), 1.0, q) - 50.0) <= 1e-9

    def test_monotone_in_level(self):
        levels = np.linspace(0.0, 2.0, 30)
        for model in (bernoulli(), poisson()):
            q = d_level_set_sup(model, np.full(30, 0.4), levels)
            assert np.all(np.diff(q) >= 0)

    def test_errors(self):
        with pytest.raises(DomainError):
            d_level_set_sup(bernoulli(), 0.5, -1.0)
        with pytest.raises(DomainError):
            d_level_set_sup(bernoulli(), 1.5, 1.0)


class TestClampedDivergences:
    def test_d_bar(self):
        assert d_bar(poisson(), 7.0, 4.0, 1.0, 5.0) == pytest.approx(KL_POIS_5_4, rel=1e-13)
        assert d_bar(bernoulli(), 0.3, 0.5, 0.1, 0.9) == pytest.approx(kl_mean(bernoulli(), 0.3, 0.5))

    def test_d_tilde_linear_extension(self):
        b = bernoulli()
        assert d_tilde(b, 0.05, 0.5, 0.1) == pytest.approx(D_TILDE_005_05_01, rel=1e-12)
        assert d_tilde(b, 0.3, 0.5, 0.1) == pytest.approx(kl_mean(b, 0.3, 0.5))
        # continuity at mu_lo
        assert d_tilde(b, 0.1 - 1e-12, 0.5, 0.1) == pytest.approx(kl_mean(b, 0.1, 0.5), abs=1e-10)

    def test_d_tilde_is_convex_decreasing_below(self):
        x = np.linspace(-2.0, 0.09, 50)
        v = d_tilde(bernoulli(), x, 0.5, 0.1)
        assert np.all(np.diff(v) < 0)

    def test_invalid_clamp(self):
        with pytest.raises(DomainError):
            d_bar(bernoulli(), 0.3, 0.5, 0.6, 0.2)


class TestInstances:
    def test_instance_properties(self):
        inst = BanditInstance(bernoulli(), (0.2, 0.8, 0.8))
        assert inst.n_arms == 3
        assert inst.mu_star == 0.8
        assert inst.optimal_set == (1, 2)
        np.testing.assert_allclose(inst.gaps, [0.6, 0.0, 0.0])

    def test_from_arms_requires_one_family(self):
        arms = [ArmDistribution(bernoulli(), 0.2), ArmDistribution(poisson(), 2.0)]
        with pytest.raises(ValueError):
            BanditInstance.from_arms(arms)

    def test_invalid_arm(self):
        with pytest.raises(DomainError):
            BanditInstance(bernoulli(), (0.2, 1.5))
        with pytest.raises(ValueError):
            ExpFamilyModel(Family.GAUSSIAN, sigma2=0.0)

    @pytest.mark.parametrize(
        "arm", [ArmDistribution(bernoulli(), 0.3), ArmDistribution(gaussian(2.0), -1.0),
                ArmDistribution(poisson(), 3.0), ArmDistribution(exponential(), 2.0)]
    )
    def test_sampling_moments(self, arm):
        rng = np.random.default_rng(11)
        x = sample(arm, rng, size=200_000)
        assert arm.model.in_support(x)
        var = arm.model.variance(arm.mean)
        assert abs(x.mean() - arm.mean) <= 5 * math.sqrt(var / x.size)
        assert isinstance(sample(arm, rng), float)
