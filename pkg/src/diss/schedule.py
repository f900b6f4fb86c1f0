"""Noise schedules and closed-form diffusion quantities.

Timesteps are 1-indexed: t runs over 1..T, with the convention that the
cumulative signal factor at t = 0 is 1 (clean data). Schedule tables are
kept in float64; elementwise image operations stay in the caller's dtype.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .images import check_same_shape

DEFAULT_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


class ScheduleRangeError(ValueError):
    """Raised for invalid schedule parameters or out-of-range timesteps."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed beta/alpha tables, immutable and shareable across workers.

    All tables have length T and are indexed by ``t - 1``; use the scalar
    accessors for 1-indexed lookups.
    """

    betas: torch.Tensor
    alphas: torch.Tensor
    alpha_bars: torch.Tensor
    posterior_betas: torch.Tensor

    @property
    def steps(self) -> int:
        return self.betas.shape[0]

    def check_t(self, t: int) -> None:
        if not 1 <= t <= self.steps:
            raise ScheduleRangeError(f"timestep {t} out of range [1, {self.steps}]")

    def beta(self, t: int) -> float:
        self.check_t(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self.check_t(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        """Cumulative product of alphas through t; alpha_bar(0) = 1."""
        if t == 0:
            return 1.0
        self.check_t(t)
        return float(self.alpha_bars[t - 1])

    def posterior_beta(self, t: int) -> float:
        """Variance of q(x_{t-1} | x_t, x_0); zero at t = 1."""
        self.check_t(t)
        return float(self.posterior_betas[t - 1])

    def posterior_beta_clipped(self, t: int) -> float:
        """Posterior variance with the t = 1 value replaced by the t = 2 one.

        The t = 1 posterior variance is exactly zero, which breaks log-space
        interpolation; the substitution mirrors usual learned-variance
        practice and only matters at the final, noiseless step.
        """
        self.check_t(t)
        if t == 1:
            if self.steps < 2:
                raise ScheduleRangeError("schedule must have at least 2 steps")
            return float(self.posterior_betas[1])
        return float(self.posterior_betas[t - 1])


def make_linear_schedule(
    steps: int = DEFAULT_STEPS,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear beta schedule, endpoints included.

    Raises ScheduleRangeError unless steps >= 2 and 0 < beta_start <=
    beta_end < 1.
    """
    if steps < 2:
        raise ScheduleRangeError(f"steps must be >= 2, got {steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleRangeError(
            f"require 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = torch.linspace(beta_start, beta_end, steps, dtype=torch.float64)
    alphas = 1.0 - betas
    alpha_bars = torch.cumprod(alphas, dim=0)
    alpha_bars_prev = torch.cat([torch.ones(1, dtype=torch.float64), alpha_bars[:-1]])
    posterior_betas = betas * (1.0 - alpha_bars_prev) / (1.0 - alpha_bars)
    return NoiseSchedule(betas, alphas, alpha_bars, posterior_betas)


def scaled_linear_schedule(steps: int) -> NoiseSchedule:
    """Linear schedule with endpoints rescaled so total noise matches the
    1000-step defaults; keeps short test schedules terminating near pure noise."""
    scale = DEFAULT_STEPS / steps
    return make_linear_schedule(steps, scale * DEFAULT_BETA_START, min(scale * DEFAULT_BETA_END, 0.999))


def _as_scalar_t(t: int | torch.Tensor) -> int | torch.Tensor:
    if isinstance(t, torch.Tensor) and t.ndim == 0:
        return int(t)
    return t


def q_sample(
    x0: torch.Tensor,
    t: int | torch.Tensor,
    eps: torch.Tensor,
    sched: NoiseSchedule,
) -> torch.Tensor:
    """Forward-marginal sample: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.

    ``t`` is a 1-indexed scalar, or a 1-D tensor of per-item timesteps for
    batched (B, C, H, W) inputs.
    """
    check_same_shape(x0, eps, "x0 and eps")
    t = _as_scalar_t(t)
    if isinstance(t, torch.Tensor):
        if int(t.min()) < 1 or int(t.max()) > sched.steps:
            raise ScheduleRangeError(f"timesteps out of range [1, {sched.steps}]")
        abar = sched.alpha_bars[t - 1].view(-1, *([1] * (x0.ndim - 1)))
        coef_signal = abar.sqrt().to(x0.dtype)
        coef_noise = (1.0 - abar).sqrt().to(x0.dtype)
    else:
        sched.check_t(int(t))
        abar = sched.alpha_bar(int(t))
        coef_signal = torch.as_tensor(abar**0.5, dtype=x0.dtype)
        coef_noise = torch.as_tensor((1.0 - abar) ** 0.5, dtype=x0.dtype)
    return coef_signal * x0 + coef_noise * eps


def posterior_mean_from_eps(
    x_t: torch.Tensor,
    eps_hat: torch.Tensor,
    t: int,
    sched: NoiseSchedule,
) -> torch.Tensor:
    """Reverse-transition mean recovered from a noise prediction:

    mu = (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)
    """
    check_same_shape(x_t, eps_hat, "x_t and eps_hat")
    sched.check_t(t)
    coef = sched.beta(t) / (1.0 - sched.alpha_bar(t)) ** 0.5
    return (x_t - coef * eps_hat) / sched.alpha(t) ** 0.5


def true_posterior_mean(
    x0: torch.Tensor,
    x_t: torch.Tensor,
    t: int,
    sched: NoiseSchedule,
) -> torch.Tensor:
    """Mean of q(x_{t-1} | x_t, x_0), the target the reverse mean chases."""
    check_same_shape(x0, x_t, "x0 and x_t")
    sched.check_t(t)
    abar = sched.alpha_bar(t)
    abar_prev = sched.alpha_bar(t - 1)
    coef_x0 = abar_prev**0.5 * sched.beta(t) / (1.0 - abar)
    coef_xt = sched.alpha(t) ** 0.5 * (1.0 - abar_prev) / (1.0 - abar)
    return coef_x0 * x0 + coef_xt * x_t


def model_variance(v: torch.Tensor, t: int, sched: NoiseSchedule) -> torch.Tensor:
    """Learned variance: log-space interpolation between beta_t and the
    posterior variance, driven by the raw network output v.

    v is mapped through (v + 1) / 2 and clamped to [0, 1]; 1 selects the
    upper bound beta_t, 0 the lower bound.
    """
    sched.check_t(t)
    frac = ((v + 1.0) / 2.0).clamp(0.0, 1.0)
    log_hi = math.log(sched.beta(t))
    log_lo = math.log(sched.posterior_beta_clipped(t))
    return torch.exp(frac * log_hi + (1.0 - frac) * log_lo)


def ddpm_step(
    mu: torch.Tensor,
    sigma_sq: torch.Tensor,
    t: int,
    noise: torch.Tensor,
) -> torch.Tensor:
    """One reverse transition: mu + sqrt(sigma_sq) * noise, deterministic at t = 1."""
    check_same_shape(mu, noise, "mu and noise")
    if t == 1:
        return mu
    return mu + torch.sqrt(sigma_sq) * noise
