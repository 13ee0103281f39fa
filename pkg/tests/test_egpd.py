import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from megpd.egpd import (EgpdParams, egpd_cdf, egpd_loglik, egpd_loglik_grad, egpd_logpdf,
                        egpd_pdf, egpd_quantile, egpd_sample, egpd_sf, fit_egpd_mle, gpd_cdf)
from megpd.errors import (DataError, DegenerateDataError, DomainError, InsufficientDataError,
                          InvalidParameterError)

STATION_PAIR = EgpdParams(1.116, 1.381, 0.193)

pos = st.floats(0.05, 20.0)
xis = st.floats(0.0, 1.0)


class TestGpdCdf:
    def test_lower_endpoint(self):
        assert gpd_cdf(0.0, 0.5) == 0.0

    def test_exponential_median(self):
        assert gpd_cdf(math.log(2), 0.0) == pytest.approx(0.5, abs=1e-15)

    def test_unit_shape(self):
        assert gpd_cdf(1.0, 1.0) == pytest.approx(0.5, abs=1e-15)

    def test_matches_scipy(self):
        y = np.linspace(0, 30, 301)
        for xi in (0.0, 0.1, 0.7, -0.2):
            yy = y[y < -1 / xi] if xi < 0 else y
            np.testing.assert_allclose(gpd_cdf(yy, xi), stats.genpareto.cdf(yy, xi), rtol=1e-12, atol=1e-15)

    def test_continuous_in_xi_at_zero(self):
        y = np.linspace(0, 10, 50)
        np.testing.assert_allclose(gpd_cdf(y, 1e-9), gpd_cdf(y, 0.0), atol=1e-8)
        np.testing.assert_allclose(gpd_cdf(y, 1e-6), gpd_cdf(y, 0.0), atol=1e-4)

    def test_outside_bounded_support(self):
        with pytest.raises(DomainError):
            gpd_cdf(3.0, -0.5)

    def test_negative_y(self):
        with pytest.raises(DomainError):
            gpd_cdf(-1.0, 0.2)


class TestEgpdCdf:
    def test_kappa_one_is_gpd(self):
        assert egpd_cdf(1.0, EgpdParams(1, 1, 1)) == pytest.approx(0.5)

    def test_exponential_squared(self):
        assert egpd_cdf(math.log(2), EgpdParams(2, 1, 0)) == pytest.approx(0.25, abs=1e-15)

    def test_matches_integrated_density(self):
        val, _ = integrate.quad(egpd_pdf, 0, 2.0, args=(STATION_PAIR,), epsabs=1e-13, epsrel=1e-13)
        assert abs(egpd_cdf(2.0, STATION_PAIR) - val) < 1e-8

    def test_zero(self):
        assert egpd_cdf(0.0, STATION_PAIR) == 0.0

    def test_invalid_params(self):
        for bad in ((0, 1, 0.1), (1, -1, 0.1), (1, 1, -0.1), (np.nan, 1, 0.1)):
            with pytest.raises(InvalidParameterError):
                egpd_cdf(1.0, EgpdParams(*bad))

    def test_sf_complements_cdf(self):
        y = np.geomspace(1e-4, 1e3, 200)
        np.testing.assert_allclose(egpd_sf(y, STATION_PAIR) + egpd_cdf(y, STATION_PAIR), 1.0, atol=1e-14)

    def test_kappa_one_reduction_grid(self):
        y = np.linspace(0, 50, 1001)
        for xi in (0.0, 0.05, 0.3, 1.0):
            p = EgpdParams(1.0, 1.7, xi)
            np.testing.assert_allclose(egpd_cdf(y, p), gpd_cdf(y / 1.7, xi), rtol=2e-16, atol=1e-300)

    @given(k=pos, s=pos, xi=xis, y1=st.floats(1e-3, 1e3), dy=st.floats(1e-3, 10))
    @settings(max_examples=200, deadline=None)
    def test_monotone(self, k, s, xi, y1, dy):
        p = EgpdParams(k, s, xi)
        assert egpd_cdf(y1 + dy, p) >= egpd_cdf(y1, p)

    def test_strictly_increasing_on_grid(self):
        y = np.geomspace(1e-3, 30, 500)
        for p in (EgpdParams(3, 1, 0.2), EgpdParams(0.3, 1, 0.05), STATION_PAIR):
            assert np.all(np.diff(egpd_cdf(y, p)) > 0)


class TestEgpdTails:
    @pytest.mark.parametrize("p", [EgpdParams(3, 1, 0.2), EgpdParams(0.3, 2, 0.05), STATION_PAIR])
    def test_lower_tail_power_law(self, p):
        for k in range(3, 7):
            y = p.sigma * 10.0**-k
            assert egpd_cdf(y, p) / (y / p.sigma) ** p.kappa == pytest.approx(1.0, rel=0.01)

    @pytest.mark.parametrize("p", [EgpdParams(3, 1, 0.2), EgpdParams(0.3, 2, 0.5), STATION_PAIR])
    def test_upper_tail_power_law(self, p):
        y = np.array([1e2, 1e4, 1e6, 1e8])
        ratio = egpd_sf(y, p) / (p.kappa * (p.xi * y / p.sigma) ** (-1 / p.xi))
        assert np.all(np.diff(np.abs(ratio - 1)) < 0)
        assert ratio[-1] == pytest.approx(1.0, rel=1e-5)


class TestEgpdPdf:
    def test_exponential_density(self):
        assert egpd_pdf(0.7, EgpdParams(1, 1, 0)) == pytest.approx(math.exp(-0.7), rel=1e-15)

    def test_integrates_to_one(self):
        p = EgpdParams(3, 1, 0.2)
        val = integrate.quad(egpd_pdf, 0, 5, args=(p,), epsabs=1e-13, epsrel=1e-12)[0] \
            + integrate.quad(egpd_pdf, 5, np.inf, args=(p,), epsabs=1e-13, epsrel=1e-12)[0]
        assert abs(val - 1) < 1e-8

    def test_cdf_derivative(self):
        p, y, h = EgpdParams(0.3, 1, 0.05), 1.3, 1e-5
        fd = (egpd_cdf(y + h, p) - egpd_cdf(y - h, p)) / (2 * h)
        assert abs(fd - egpd_pdf(y, p)) < 1e-6

    def test_requires_positive(self):
        with pytest.raises(DomainError):
            egpd_pdf(0.0, STATION_PAIR)

    def test_logpdf_nonpositive_is_minus_inf(self):
        assert egpd_logpdf(0.0, STATION_PAIR) == -np.inf


class TestEgpdQuantile:
    def test_gpd_median(self):
        assert egpd_quantile(0.5, EgpdParams(1, 1, 1)) == pytest.approx(1.0, rel=1e-15)

    def test_exponential_median(self):
        assert egpd_quantile(0.5, EgpdParams(1, 1, 0)) == pytest.approx(math.log(2), rel=1e-15)

    def test_round_trip_grid(self):
        probs = np.linspace(0.001, 0.999, 999)
        err = np.abs(egpd_cdf(egpd_quantile(probs, STATION_PAIR), STATION_PAIR) - probs)
        assert err.max() < 1e-10

    @given(prob=st.floats(1e-4, 1 - 1e-4), k=pos, s=pos, xi=xis)
    @settings(max_examples=300, deadline=None)
    def test_round_trip_property(self, prob, k, s, xi):
        p = EgpdParams(k, s, xi)
        assert abs(egpd_cdf(egpd_quantile(prob, p), p) - prob) < 1e-10

    @pytest.mark.parametrize("prob", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, prob):
        with pytest.raises(DomainError):
            egpd_quantile(prob, STATION_PAIR)

    def test_closed_form(self):
        prob, p = 0.83, EgpdParams(2.5, 1.4, 0.3)
        ref = p.sigma / p.xi * ((1 - prob ** (1 / p.kappa)) ** -p.xi - 1)
        assert egpd_quantile(prob, p) == pytest.approx(ref, rel=1e-13)

    def test_sample_follows_law(self):
        x = egpd_sample(STATION_PAIR, 20000, np.random.default_rng(3))
        assert stats.kstest(x, lambda y: egpd_cdf(y, STATION_PAIR)).pvalue > 1e-3


class TestEgpdLoglik:
    def test_single_point(self):
        assert egpd_loglik([0.7], EgpdParams(1, 1, 0)) == pytest.approx(-0.7, rel=1e-15)

    def test_additive(self, rng):
        x = egpd_sample(STATION_PAIR, 100, rng)
        assert egpd_loglik(x, STATION_PAIR) == pytest.approx(sum(egpd_loglik([v], STATION_PAIR) for v in x), rel=1e-12)

    def test_monte_carlo_expectation(self):
        p = EgpdParams(3, 1, 0.05)
        x = egpd_sample(p, 100_000, np.random.default_rng(11))
        lp = egpd_logpdf(x, p)
        # expectation of log f by quadrature, independent of the sample
        expect = integrate.quad(lambda y: egpd_pdf(y, p) * egpd_logpdf(y, p), 0, np.inf, limit=200)[0]
        se = lp.std(ddof=1) / np.sqrt(lp.size)
        assert abs(egpd_loglik(x, p) / x.size - expect) < 3 * se

    def test_empty(self):
        with pytest.raises(DataError):
            egpd_loglik([], STATION_PAIR)

    def test_nonpositive(self):
        with pytest.raises(DomainError):
            egpd_loglik([1.0, 0.0], STATION_PAIR)

    def test_gradient_finite_difference(self, rng):
        p = EgpdParams(2.0, 1.3, 0.15)
        x = egpd_sample(p, 500, rng)
        g = egpd_loglik_grad(x, p)
        for i in range(3):
            v = np.array(p.as_array())
            h = 1e-6 * v[i]
            vp, vm = v.copy(), v.copy()
            vp[i] += h
            vm[i] -= h
            fd = (egpd_loglik(x, EgpdParams(*vp)) - egpd_loglik(x, EgpdParams(*vm))) / (2 * h)
            assert fd == pytest.approx(g[i], rel=1e-5)


class TestFitEgpdMle:
    def test_recovers_within_bootstrap_se(self):
        p = EgpdParams(3, 1, 0.05)
        x = egpd_sample(p, 4000, np.random.default_rng(5))
        est, rep = fit_egpd_mle(x)
        assert rep.converged
        boot_rng = np.random.default_rng(6)
        boot = np.array([fit_egpd_mle(egpd_sample(est, 4000, boot_rng))[0].as_array() for _ in range(40)])
        se = boot.std(axis=0, ddof=1)
        assert np.all(np.abs(est.as_array() - p.as_array()) < 3 * se)

    def test_pure_gpd_kappa(self):
        rng = np.random.default_rng(8)
        p = EgpdParams(1, 1, 0.1)
        k = np.array([fit_egpd_mle(egpd_sample(p, 4000, rng))[0].kappa for _ in range(100)])
        assert np.all((k >= 0.8) & (k <= 1.25))

    def test_init_at_truth_not_worse(self, rng):
        p = EgpdParams(3, 1, 0.05)
        x = egpd_sample(p, 1000, rng)
        _, rep = fit_egpd_mle(x, init=p)
        assert rep.loglik >= egpd_loglik(x, p)

    def test_bfgs_agrees(self, rng):
        x = egpd_sample(STATION_PAIR, 3000, rng)
        a, _ = fit_egpd_mle(x)
        b, rep = fit_egpd_mle(x, method="bfgs")
        np.testing.assert_allclose(a.as_array(), b.as_array(), rtol=1e-3)

    def test_floor(self):
        with pytest.raises(InsufficientDataError):
            fit_egpd_mle(np.arange(1.0, 11.0))

    def test_degenerate(self):
        with pytest.raises(DegenerateDataError):
            fit_egpd_mle(np.full(50, 2.0))

    def test_nonpositive(self):
        with pytest.raises(DataError):
            fit_egpd_mle(np.r_[np.linspace(0.5, 3.0, 40), 0.0])

    def test_nonconvergence_is_reported(self, rng):
        x = egpd_sample(STATION_PAIR, 500, rng)
        _, rep = fit_egpd_mle(x, maxiter=3)
        assert not rep.converged
        assert rep.iterations <= 6
