"""Hybrid-objective training with two-stage condition dropout.

Stage one trains on complete sketch/stroke conditions; stage two
fine-tunes with each condition independently replaced by the gray null
image 30% of the time, which is what makes classifier-free guidance
possible at sampling time. The loss is the noise-prediction MSE plus a
small variational term that trains only the variance head.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch

from .checkpoint import Checkpoint
from .guidance import null_condition
from .images import check_same_shape
from .schedule import (
    NoiseSchedule,
    model_variance,
    posterior_mean_from_eps,
    q_sample,
    true_posterior_mean,
)
from .unet import ConditionalUNet

BIN_HALF_WIDTH = 1.0 / 255.0


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite; carries the offending step for diagnosis."""


@dataclass(frozen=True)
class ConditionPair:
    sketch: torch.Tensor
    stroke: torch.Tensor


@dataclass
class TrainConfig:
    batch_size: int = 2
    learning_rate: float = 1e-4
    vlb_weight: float = 0.001
    dropout_prob: float = 0.3
    stage: int = 1
    steps: int = 1000
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError(f"dropout_prob must be in [0, 1], got {self.dropout_prob}")
        if self.vlb_weight < 0:
            raise ValueError(f"vlb_weight must be >= 0, got {self.vlb_weight}")
        if self.steps <= 0:
            raise ValueError(f"steps must be positive, got {self.steps}")
        if self.stage not in (1, 2):
            raise ValueError(f"stage must be 1 or 2, got {self.stage}")


def l_simple(eps: torch.Tensor, eps_hat: torch.Tensor) -> torch.Tensor:
    """Mean squared error between true and predicted noise, over all elements."""
    check_same_shape(eps, eps_hat, "eps and eps_hat")
    return ((eps - eps_hat) ** 2).mean()


def _standard_normal_cdf(z: torch.Tensor) -> torch.Tensor:
    return 0.5 * (1.0 + torch.erf(z / math.sqrt(2.0)))


def discretized_gaussian_nll(
    x0: torch.Tensor, mean: torch.Tensor, var: torch.Tensor
) -> torch.Tensor:
    """Negative log-likelihood of 8-bit data under a Gaussian discretized
    into bins of width 2/255, with open bins at the [-1, 1] extremes."""
    std = torch.sqrt(var)
    plus = _standard_normal_cdf((x0 + BIN_HALF_WIDTH - mean) / std)
    minus = _standard_normal_cdf((x0 - BIN_HALF_WIDTH - mean) / std)
    log_probs = torch.where(
        x0 < -0.999,
        torch.log(plus.clamp(min=1e-12)),
        torch.where(
            x0 > 0.999,
            torch.log((1.0 - minus).clamp(min=1e-12)),
            torch.log((plus - minus).clamp(min=1e-12)),
        ),
    )
    return -log_probs.mean()


def l_vlb_term(
    x0: torch.Tensor,
    x_t: torch.Tensor,
    t: int,
    mu_theta: torch.Tensor,
    sigma_sq_theta: torch.Tensor,
    sched: NoiseSchedule,
) -> torch.Tensor:
    """Per-step variational term in nats, averaged over elements.

    For t >= 2 this is the KL between the true reverse-step posterior and
    the model transition; at t = 1 it is the discretized reconstruction
    NLL. The mean is gradient-stopped so only the variance head trains.
    """
    if (sigma_sq_theta <= 0).any():
        raise ValueError("model variance must be positive")
    mu_theta = mu_theta.detach()
    if t == 1:
        return discretized_gaussian_nll(x0, mu_theta, sigma_sq_theta)
    mu_q = true_posterior_mean(x0, x_t, t, sched)
    var_q = sched.posterior_beta(t)
    kl = 0.5 * (
        torch.log(sigma_sq_theta / var_q)
        + (var_q + (mu_q - mu_theta) ** 2) / sigma_sq_theta
        - 1.0
    )
    return kl.mean()


def condition_dropout(
    pair: ConditionPair, p: float, generator: torch.Generator
) -> ConditionPair:
    """Independently replace each condition with the gray null image with
    probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"dropout probability must be in [0, 1], got {p}")
    draws = torch.rand(2, generator=generator)
    sketch, stroke = pair.sketch, pair.stroke
    if float(draws[0]) < p:
        sketch = null_condition(1, sketch.shape[-1], sketch.dtype)
    if float(draws[1]) < p:
        stroke = null_condition(3, stroke.shape[-1], stroke.dtype)
    return ConditionPair(sketch, stroke)


def hybrid_loss(
    batch: Sequence[tuple[torch.Tensor, torch.Tensor, torch.Tensor]],
    net: ConditionalUNet,
    sched: NoiseSchedule,
    cfg: TrainConfig,
    generator: torch.Generator,
) -> tuple[torch.Tensor, dict]:
    """Noise MSE plus weighted variational term, averaged over the batch.

    Each batch item draws its own uniform timestep and noise from the
    supplied generator, so a fixed seed fixes the loss value. Returns the
    scalar loss and a diagnostics dict with the two components.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    x0 = torch.stack([item[0] for item in batch])
    sketches = torch.stack([item[1] for item in batch])
    strokes = torch.stack([item[2] for item in batch])
    t_items = torch.randint(1, sched.steps + 1, (len(batch),), generator=generator)
    eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    x_t = q_sample(x0, t_items, eps, sched)

    out = net(x_t, t_items, sketches, strokes)
    eps_hat, v = out[:, :3], out[:, 3:]
    simple = l_simple(eps, eps_hat)

    vlb_terms = []
    for i in range(len(batch)):
        t_i = int(t_items[i])
        mu = posterior_mean_from_eps(x_t[i], eps_hat[i], t_i, sched)
        sigma_sq = model_variance(v[i], t_i, sched)
        vlb_terms.append(l_vlb_term(x0[i], x_t[i], t_i, mu, sigma_sq, sched))
    vlb = torch.stack(vlb_terms).mean()

    loss = simple + cfg.vlb_weight * vlb
    return loss, {"l_simple": float(simple.detach()), "l_vlb": float(vlb.detach())}


def train_stage(
    dataset: Sequence[tuple[torch.Tensor, torch.Tensor, torch.Tensor]],
    net: ConditionalUNet,
    cfg: TrainConfig,
    sched: NoiseSchedule,
    *,
    init_from: Checkpoint | None = None,
    log_path: str | Path | None = None,
    schedule_meta: dict | None = None,
) -> Checkpoint:
    """Run one training stage and return the resulting checkpoint.

    Stage 2 requires a stage-1 checkpoint to fine-tune from. Batches are
    drawn in a seed-determined order; loss records go to ``log_path`` as
    one JSON object per line.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if cfg.stage == 2:
        if init_from is None:
            raise ValueError("stage 2 requires a stage-1 checkpoint to start from")
        init_from.apply_to(net)
    elif init_from is not None:
        init_from.apply_to(net)

    generator = torch.Generator().manual_seed(cfg.seed)
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    log_file = open(log_path, "a") if log_path is not None else None
    try:
        for step in range(1, cfg.steps + 1):
            idx = torch.randint(len(dataset), (cfg.batch_size,), generator=generator)
            batch = []
            for i in idx.tolist():
                photo, sketch, stroke = dataset[i]
                if cfg.stage == 2:
                    pair = condition_dropout(
                        ConditionPair(sketch, stroke), cfg.dropout_prob, generator
                    )
                    sketch, stroke = pair.sketch, pair.stroke
                batch.append((photo, sketch, stroke))

            optimizer.zero_grad()
            loss, parts = hybrid_loss(batch, net, sched, cfg, generator)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at step {step}: l_simple={parts['l_simple']}, "
                    f"l_vlb={parts['l_vlb']}"
                )
            loss.backward()
            optimizer.step()

            if log_file is not None:
                record = {"step": step, "loss": float(loss.detach()), **parts}
                log_file.write(json.dumps(record) + "\n")
            if (
                cfg.checkpoint_every
                and cfg.checkpoint_dir
                and step % cfg.checkpoint_every == 0
            ):
                from .checkpoint import save_checkpoint

                ckpt = Checkpoint.from_network(
                    net, stage=cfg.stage, step=step, schedule=schedule_meta or {}
                )
                save_checkpoint(ckpt, Path(cfg.checkpoint_dir) / f"{step}.ckpt")
    finally:
        if log_file is not None:
            log_file.close()

    return Checkpoint.from_network(
        net, stage=cfg.stage, step=cfg.steps, schedule=schedule_meta or {}
    )
