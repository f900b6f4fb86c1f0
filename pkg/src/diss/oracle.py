"""Closed-form optimal denoiser for Gaussian-distributed data.

When the data distribution is N(mu0, sigma0^2 I), the posterior over the
clean image given a noised one is Gaussian and the optimal noise
prediction has a closed form. This stands in for a perfectly trained
unconditional network when validating samplers without any training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .schedule import NoiseSchedule


def analytic_gaussian_eps(
    x_t: torch.Tensor,
    t: int,
    mu0: torch.Tensor,
    sigma0: float,
    sched: NoiseSchedule,
) -> torch.Tensor:
    """E[eps | x_t] for x0 ~ N(mu0, sigma0^2 I).

    E[x0 | x_t] shrinks x_t toward the prior mean by the usual Gaussian
    posterior factor; the noise estimate follows from inverting the
    forward marginal.
    """
    sched.check_t(t)
    abar = sched.alpha_bar(t)
    shrink = (abar**0.5 * sigma0**2) / (abar * sigma0**2 + 1.0 - abar)
    x0_hat = mu0 + shrink * (x_t - abar**0.5 * mu0)
    return (x_t - abar**0.5 * x0_hat) / (1.0 - abar) ** 0.5


def true_reverse_variance(t: int, sigma0: float, sched: NoiseSchedule) -> float:
    """Exact Var[x_{t-1} | x_t] for Gaussian data.

    The reverse conditional is Gaussian: the step posterior variance plus
    the uncertainty in x0 propagated through the posterior-mean
    coefficient. Always lies between the schedule's lower and upper
    variance bounds.
    """
    sched.check_t(t)
    if t == 1:
        return sched.posterior_beta_clipped(1)
    abar = sched.alpha_bar(t)
    abar_prev = sched.alpha_bar(t - 1)
    coef_x0 = abar_prev**0.5 * sched.beta(t) / (1.0 - abar)
    x0_var = sigma0**2 * (1.0 - abar) / (abar * sigma0**2 + 1.0 - abar)
    return sched.posterior_beta(t) + coef_x0**2 * x0_var


@dataclass(frozen=True)
class AnalyticGaussianDenoiser:
    """Drop-in denoiser: ignores conditions, predicts the optimal noise.

    The variance channel is set so the learned-variance interpolation
    reproduces the exact reverse variance, as a perfectly trained
    variance head would.
    """

    mu0: torch.Tensor
    sigma0: float
    sched: NoiseSchedule

    def __post_init__(self) -> None:
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")

    @property
    def image_size(self) -> int:
        return self.mu0.shape[-1]

    def _v_raw(self, t: int) -> float:
        """Raw v that makes model_variance yield the true reverse variance."""
        log_lo = math.log(self.sched.posterior_beta_clipped(t))
        log_hi = math.log(self.sched.beta(t))
        log_target = math.log(true_reverse_variance(t, self.sigma0, self.sched))
        frac = (log_target - log_lo) / (log_hi - log_lo)
        return 2.0 * min(max(frac, 0.0), 1.0) - 1.0

    def predict(
        self,
        x_t: torch.Tensor,
        t: int,
        c_sketch: torch.Tensor,
        c_stroke: torch.Tensor,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        eps = analytic_gaussian_eps(x_t, t, self.mu0, self.sigma0, self.sched)
        return eps, torch.full_like(x_t, self._v_raw(t))
