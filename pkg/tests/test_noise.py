import numpy as np
import pytest

from gnsfilter.noise import (
    AlphaStableParams,
    MomentUndefinedError,
    estimate_abs_moment_empirical,
    flom,
    flom_abs_moment,
    sample_sas,
    standard_sas,
)
from oracles import abs_moment_monte_carlo, abs_moment_quadrature


def ecf_z(x, theta, target):
    c = np.cos(theta * x)
    return (c.mean() - target) / (c.std(ddof=1) / np.sqrt(c.size))


class TestParams:
    @pytest.mark.parametrize("alpha,gamma", [(0.0, 1.0), (2.5, 1.0), (1.5, 0.0), (1.5, -1.0)])
    def test_invalid(self, alpha, gamma):
        with pytest.raises(ValueError):
            AlphaStableParams(alpha, gamma)

    def test_scale_convention(self):
        p = AlphaStableParams.from_convention(1.5, 0.2, "scale")
        assert p.gamma == pytest.approx(0.2**1.5, rel=1e-15)
        assert p.scale == pytest.approx(0.2, rel=1e-12)
        assert AlphaStableParams.from_convention(1.5, 0.2).gamma == 0.2

    def test_unknown_convention(self):
        with pytest.raises(ValueError):
            AlphaStableParams.from_convention(1.5, 0.2, "width")


class TestSampler:
    def test_gaussian_variance(self):
        x = sample_sas(AlphaStableParams(2.0, 0.1), 10**6, rng_seed=1).samples
        assert abs(x.var() / 0.2 - 1) < 0.02

    def test_cauchy_quartiles(self):
        x = sample_sas(AlphaStableParams(1.0, 1.0), 10**6, rng_seed=2).samples
        q1, med, q3 = np.percentile(x, [25, 50, 75])
        assert abs(med) < 0.01
        assert abs((q3 - q1) / 2 - 1) < 0.02

    @pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
    def test_characteristic_function(self, theta):
        x = sample_sas(AlphaStableParams(1.1, 0.1), 10**6, rng_seed=3).samples
        assert abs(ecf_z(x, theta, np.exp(-0.1 * theta**1.1))) < 3

    @pytest.mark.parametrize("alpha", [0.7, 1.0, 1.5])
    def test_characteristic_function_other_alpha(self, alpha):
        x = sample_sas(AlphaStableParams(alpha, 0.5), 10**6, rng_seed=4).samples
        assert abs(ecf_z(x, 1.0, np.exp(-0.5))) < 3

    def test_stability_closure(self):
        p = AlphaStableParams(1.3, 0.2)
        x = sample_sas(p, (2, 10**6), rng_seed=5).samples.sum(axis=0)
        for theta in (0.5, 1.0, 2.0):
            assert abs(ecf_z(x, theta, np.exp(-0.4 * theta**1.3))) < 3

    def test_symmetry(self):
        x = sample_sas(AlphaStableParams(1.5, 0.1), 10**6, rng_seed=6).samples
        assert abs(x.mean()) < 4 * x.std(ddof=1) / np.sqrt(x.size)

    def test_determinism_and_finite(self):
        p = AlphaStableParams(1.05, 0.1)
        a = sample_sas(p, 10**5, rng_seed=7)
        b = sample_sas(p, 10**5, rng_seed=7)
        assert np.array_equal(a.samples, b.samples)
        assert a.seed == 7
        assert np.all(np.isfinite(a.samples))

    def test_shape(self):
        x = sample_sas(AlphaStableParams(1.5, 0.1), (3, 4), rng_seed=0).samples
        assert x.shape == (3, 4)

    def test_standard_scale(self):
        # scaling the standard draw by gamma**(1/alpha) is exactly what sample_sas does
        rng1, rng2 = np.random.default_rng(8), np.random.default_rng(8)
        p = AlphaStableParams(1.4, 0.3)
        np.testing.assert_array_equal(
            sample_sas(p, 1000, rng=rng1).samples, p.scale * standard_sas(1.4, 1000, rng2)
        )


class TestMoments:
    def test_gaussian_closed_form(self):
        assert flom_abs_moment(AlphaStableParams(2.0, 0.1)) == pytest.approx(2 * np.sqrt(0.1 / np.pi), rel=1e-12)
        assert flom_abs_moment(AlphaStableParams(2.0, 0.1)) == pytest.approx(0.356825, abs=1e-6)

    def test_scaling_law(self):
        a = flom_abs_moment(AlphaStableParams(1.5, 0.1))
        b = flom_abs_moment(AlphaStableParams(1.5, 0.2))
        assert abs(b / a - 2 ** (1 / 1.5)) < 1e-9

    @pytest.mark.parametrize("alpha", [0.5, 1.0])
    def test_undefined(self, alpha):
        with pytest.raises(MomentUndefinedError):
            flom_abs_moment(AlphaStableParams(alpha, 0.1))

    @pytest.mark.parametrize("alpha", [1.05, 1.1, 1.5, 1.9, 2.0])
    @pytest.mark.parametrize("gamma", [0.1, 1.0])
    def test_matches_quadrature(self, alpha, gamma):
        exact = flom_abs_moment(AlphaStableParams(alpha, gamma))
        assert exact == pytest.approx(abs_moment_quadrature(alpha, gamma), rel=1e-7)

    @pytest.mark.parametrize("alpha", [1.1, 1.5, 2.0])
    @pytest.mark.parametrize("gamma", [0.1, 1.0])
    def test_matches_finite_variance_monte_carlo(self, alpha, gamma):
        mean, se = abs_moment_monte_carlo(alpha, gamma, 10**6, seed=9)
        assert abs(mean - flom_abs_moment(AlphaStableParams(alpha, gamma))) < 3 * se

    def test_general_flom_p1(self):
        p = AlphaStableParams(1.3, 0.4)
        assert flom(p, 1.0) == pytest.approx(flom_abs_moment(p), rel=1e-12)

    def test_general_flom_gaussian_second_moment_limit(self):
        # p -> 2 is excluded, but p = 0.5 at alpha = 2 is the half-moment of N(0, 2 gamma)
        from scipy.special import gamma as G

        sigma = np.sqrt(0.2)
        expected = sigma**0.5 * 2**0.25 * G(0.75) / np.sqrt(np.pi)
        assert flom(AlphaStableParams(2.0, 0.1), 0.5) == pytest.approx(expected, rel=1e-12)

    def test_flom_range(self):
        with pytest.raises(MomentUndefinedError):
            flom(AlphaStableParams(1.3, 0.4), 1.3)


class TestEmpiricalMoment:
    def test_light_tail_cross_check(self):
        p = AlphaStableParams(1.9, 0.1)
        est = estimate_abs_moment_empirical(sample_sas(p, 10**6, rng_seed=10))
        assert abs(est / flom_abs_moment(p) - 1) < 0.05

    def test_examples(self):
        assert estimate_abs_moment_empirical([1.0, -1.0]) == 1.0
        assert estimate_abs_moment_empirical([0.0, 0.0, 3.0]) == 1.0

    def test_realization_input(self):
        r = sample_sas(AlphaStableParams(2.0, 0.1), 10, rng_seed=0)
        assert estimate_abs_moment_empirical(r) == pytest.approx(np.mean(np.abs(r.samples)))

    def test_empty(self):
        with pytest.raises(ValueError):
            estimate_abs_moment_empirical([])

    @pytest.mark.xfail(
        strict=True,
        reason="|X| has infinite variance at alpha = 1.2; the 1e6-draw mean runs about 7% low "
        "in the median over seeds, so a 5% band is not met reliably",
    )
    def test_heavy_tail_cross_check(self):
        p = AlphaStableParams(1.2, 0.1)
        est = estimate_abs_moment_empirical(sample_sas(p, 10**6, rng_seed=10))
        assert abs(est / flom_abs_moment(p) - 1) < 0.05
