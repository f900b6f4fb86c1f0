"""Inference procedures: guided sampling, local editing, and region fill.

All three share one reverse-diffusion engine. A trajectory is strictly
sequential in t and owns a generator seeded from the request, so
(seed, request, checkpoint) fully determines the output. Noise draws
happen in a fixed order per step: transition noise first, then (only on
refined steps) the reference noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import torch

from .guidance import GuidanceScales, guided_epsilon
from .images import check_same_shape, validate_image
from .realism import RealismConfig, lowpass
from .schedule import (
    NoiseSchedule,
    ddpm_step,
    model_variance,
    posterior_mean_from_eps,
    q_sample,
    scaled_linear_schedule,
    true_posterior_mean,
)

WHITE_TOLERANCE = 2.0 / 255.0


class NumericDivergenceError(RuntimeError):
    """A latent went non-finite during sampling."""


@dataclass
class SampleRequest:
    """Inputs for one generation run.

    ``realism=None`` disables latent refinement entirely (pure guided
    sampling); ``c_comb`` defaults to the sketch composited over the
    stroke. ``steps`` overrides the schedule length for this run.
    ``clip_x0`` bounds the implied clean-image estimate to [-1, 1] when
    forming each reverse mean; without it, guided chains driven by an
    imperfect network drift out of range and saturate. Latents themselves
    are never clamped mid-run.
    """

    c_sketch: torch.Tensor
    c_stroke: torch.Tensor
    c_comb: torch.Tensor | None = None
    scales: GuidanceScales = field(default_factory=GuidanceScales)
    realism: RealismConfig | None = field(default_factory=lambda: RealismConfig(1.0))
    seed: int = 0
    steps: int | None = None
    clip_x0: bool = True


@dataclass
class EditRequest(SampleRequest):
    """Adds the refinement cutoff: refinement runs only while t > cutoff."""

    refine_cutoff: int = 0


@dataclass
class StepTrace:
    """Per-step trace record for instrumented tests and debugging."""

    t: int
    x_tilde: torch.Tensor
    reference_t: torch.Tensor | None
    x: torch.Tensor


TraceHook = Callable[[StepTrace], None]


def stroke_mask(c_stroke: torch.Tensor) -> torch.Tensor:
    """Binary (1, H, W) mask: 0 on colored pixels, 1 elsewhere.

    A pixel counts as colored when its channels are visibly saturated or
    it deviates from white beyond a 2/255 file-space tolerance.
    """
    validate_image(c_stroke, channels=3, name="c_stroke")
    file_vals = (c_stroke.clamp(-1.0, 1.0) + 1.0) / 2.0
    saturated = (file_vals.max(dim=0).values - file_vals.min(dim=0).values) > WHITE_TOLERANCE
    off_white = (1.0 - file_vals.min(dim=0).values) > WHITE_TOLERANCE
    return torch.where(saturated | off_white, 0.0, 1.0)[None].to(c_stroke.dtype)


def _validate_request(req: SampleRequest) -> None:
    validate_image(req.c_sketch, channels=1, name="c_sketch")
    validate_image(req.c_stroke, channels=3, name="c_stroke")
    check_same_shape(req.c_sketch[:1], req.c_stroke[:1], "sketch and stroke spatial planes")
    if req.c_comb is not None:
        validate_image(req.c_comb, channels=3, name="c_comb")
        check_same_shape(req.c_comb, req.c_stroke, "c_comb and c_stroke")


def _combined_reference(req: SampleRequest) -> torch.Tensor:
    if req.c_comb is not None:
        return req.c_comb
    from .data import compose_comb

    return compose_comb(req.c_sketch, req.c_stroke)


def _effective_schedule(req: SampleRequest, sched: NoiseSchedule) -> NoiseSchedule:
    if req.steps is None or req.steps == sched.steps:
        return sched
    return scaled_linear_schedule(req.steps)


def _reverse_loop(
    net,
    sched: NoiseSchedule,
    req: SampleRequest,
    reference: torch.Tensor,
    cutoff: int,
    mask: torch.Tensor | None,
    trace: TraceHook | None,
) -> torch.Tensor:
    size = req.c_sketch.shape[-1]
    generator = torch.Generator().manual_seed(req.seed)
    x = torch.randn(3, size, size, generator=generator)
    lp_size = req.realism.size_for(size) if req.realism is not None else None

    for t in range(sched.steps, 0, -1):
        eps, v = guided_epsilon(net, x, t, req.c_sketch, req.c_stroke, req.scales)
        sigma_sq = model_variance(v, t, sched)
        if req.clip_x0:
            abar = sched.alpha_bar(t)
            x0_hat = (x - (1.0 - abar) ** 0.5 * eps) / abar**0.5
            mu = true_posterior_mean(x0_hat.clamp(-1.0, 1.0), x, t, sched)
        else:
            mu = posterior_mean_from_eps(x, eps, t, sched)
        step_noise = torch.randn(x.shape, generator=generator)
        x_tilde = ddpm_step(mu, sigma_sq, t, step_noise)

        ref_t: torch.Tensor | None = None
        if req.realism is not None and t > cutoff:
            ref_noise = torch.randn(x.shape, generator=generator)
            ref_t = reference if t == 1 else q_sample(reference, t - 1, ref_noise, sched)
            if mask is not None:
                x_tilde = torch.where(mask > 0.5, x_tilde, ref_t)
            x = x_tilde + (lowpass(ref_t, lp_size) - lowpass(x_tilde, lp_size))
        else:
            x = x_tilde

        if not torch.isfinite(x).all():
            raise NumericDivergenceError(f"non-finite latent at step t={t}")
        if trace is not None:
            trace(StepTrace(t=t, x_tilde=x_tilde, reference_t=ref_t, x=x))
    return x.clamp(-1.0, 1.0)


def sample(
    req: SampleRequest,
    net,
    sched: NoiseSchedule,
    trace: TraceHook | None = None,
) -> torch.Tensor:
    """Full guided sampling with per-step latent refinement."""
    _validate_request(req)
    reference = _combined_reference(req)
    sched = _effective_schedule(req, sched)
    with torch.no_grad():
        return _reverse_loop(net, sched, req, reference, cutoff=0, mask=None, trace=trace)


def local_edit(
    req: EditRequest,
    net,
    sched: NoiseSchedule,
    trace: TraceHook | None = None,
) -> torch.Tensor:
    """Guided sampling that refines against the overlaid image only while
    t > refine_cutoff, leaving late steps free to blend the edits."""
    _validate_request(req)
    reference = _combined_reference(req)
    sched = _effective_schedule(req, sched)
    if not 0 <= req.refine_cutoff <= sched.steps:
        raise ValueError(f"refine_cutoff {req.refine_cutoff} out of range [0, {sched.steps}]")
    with torch.no_grad():
        return _reverse_loop(
            net, sched, req, reference, cutoff=req.refine_cutoff, mask=None, trace=trace
        )


def region_fill(
    req: EditRequest,
    net,
    sched: NoiseSchedule,
    trace: TraceHook | None = None,
) -> torch.Tensor:
    """Stroke-to-image with colored pixels pinned to the noised stroke.

    While t > refine_cutoff each step draws one noised stroke, overwrites
    the colored region of the latent with it, then refines against the
    same sample; uncolored regions stay free to vary.
    """
    _validate_request(req)
    sched = _effective_schedule(req, sched)
    if not 0 <= req.refine_cutoff <= sched.steps:
        raise ValueError(f"refine_cutoff {req.refine_cutoff} out of range [0, {sched.steps}]")
    mask = stroke_mask(req.c_stroke)
    with torch.no_grad():
        return _reverse_loop(
            net, sched, req, req.c_stroke, cutoff=req.refine_cutoff, mask=mask, trace=trace
        )


def default_refine_cutoff(steps: int) -> int:
    """Editing/fill cutoff when a request does not specify one."""
    return int(round(0.2 * steps))
