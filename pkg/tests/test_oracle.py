import numpy as np
import pytest
import torch

from diss.oracle import AnalyticGaussianDenoiser, analytic_gaussian_eps, true_reverse_variance
from diss.schedule import model_variance


class TestAnalyticGaussianEps:
    def test_point_mass_limit(self, sched50):
        """As sigma0 -> 0 the posterior collapses to mu0."""
        mu0 = torch.full((1, 4, 4), 0.2)
        x_t = torch.randn(1, 4, 4)
        t = 20
        eps = analytic_gaussian_eps(x_t, t, mu0, 1e-8, sched50)
        abar = sched50.alpha_bar(t)
        expected = (x_t - abar**0.5 * mu0) / (1 - abar) ** 0.5
        assert torch.allclose(eps, expected, atol=1e-5)

    def test_zero_at_symmetry_center(self, sched50):
        mu0 = torch.full((3, 4, 4), -0.4)
        t = 35
        x_t = sched50.alpha_bar(t) ** 0.5 * mu0
        eps = analytic_gaussian_eps(x_t, t, mu0, 0.3, sched50)
        assert eps.abs().max() < 1e-6

    def test_matches_quadrature_posterior(self, sched50):
        """1-D numerical integration of p(x0 | x_t) against the closed form."""
        mu0_val, sigma0 = 0.1, 0.35
        t = 15
        abar = sched50.alpha_bar(t)
        grid = np.linspace(mu0_val - 8 * sigma0, mu0_val + 8 * sigma0, 20_001)
        for x_t_val in (-1.2, 0.0, 0.6, 2.5):
            prior = np.exp(-0.5 * ((grid - mu0_val) / sigma0) ** 2)
            likelihood = np.exp(
                -0.5 * (x_t_val - abar**0.5 * grid) ** 2 / (1 - abar)
            )
            posterior = prior * likelihood
            posterior /= np.trapezoid(posterior, grid)
            x0_mean = np.trapezoid(grid * posterior, grid)
            expected_eps = (x_t_val - abar**0.5 * x0_mean) / (1 - abar) ** 0.5
            actual = analytic_gaussian_eps(
                torch.full((1, 1, 1), x_t_val),
                t,
                torch.full((1, 1, 1), mu0_val),
                sigma0,
                sched50,
            )
            assert abs(float(actual) - expected_eps) < 1e-4

    def test_rejects_bad_sigma(self, sched50):
        with pytest.raises(ValueError):
            AnalyticGaussianDenoiser(mu0=torch.zeros(3, 4, 4), sigma0=0.0, sched=sched50)


class TestVarianceHead:
    def test_reverse_variance_within_interpolation_bounds(self, sched50):
        for t in range(2, 51):
            var = true_reverse_variance(t, 0.25, sched50)
            assert sched50.posterior_beta(t) <= var <= sched50.beta(t)

    def test_predict_v_reproduces_reverse_variance(self, sched50):
        oracle = AnalyticGaussianDenoiser(
            mu0=torch.zeros(3, 2, 2), sigma0=0.25, sched=sched50
        )
        for t in (2, 10, 30, 50):
            _, v = oracle.predict(torch.zeros(3, 2, 2), t, None, None)
            sigma_sq = model_variance(v, t, sched50)
            target = true_reverse_variance(t, 0.25, sched50)
            assert torch.allclose(
                sigma_sq, torch.full_like(sigma_sq, target), rtol=1e-5
            )

    def test_ignores_conditions(self, sched50):
        oracle = AnalyticGaussianDenoiser(
            mu0=torch.zeros(1, 2, 2), sigma0=0.5, sched=sched50
        )
        x = torch.randn(1, 2, 2)
        eps_a, _ = oracle.predict(x, 5, torch.zeros(1, 2, 2), torch.zeros(3, 2, 2))
        eps_b, _ = oracle.predict(x, 5, torch.ones(1, 2, 2), -torch.ones(3, 2, 2))
        assert torch.equal(eps_a, eps_b)
