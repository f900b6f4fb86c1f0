"""Diffusion-based image generation from sketch and stroke drawings,
with continuous control over sketch faithfulness, stroke faithfulness,
and realism."""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .guidance import GuidanceScales, guided_epsilon, null_condition
from .images import decode_png, encode_png, to_file_space, to_model_space
from .oracle import AnalyticGaussianDenoiser, analytic_gaussian_eps
from .realism import RealismConfig, ilvr_refine, lowpass, lowpass_size
from .sampler import (
    EditRequest,
    NumericDivergenceError,
    SampleRequest,
    local_edit,
    region_fill,
    sample,
    stroke_mask,
)
from .schedule import (
    NoiseSchedule,
    ddpm_step,
    make_linear_schedule,
    model_variance,
    posterior_mean_from_eps,
    q_sample,
    scaled_linear_schedule,
)
from .training import TrainConfig, condition_dropout, hybrid_loss, l_simple, l_vlb_term, train_stage
from .unet import ConditionalUNet, UNetConfig

__all__ = [
    "AnalyticGaussianDenoiser",
    "Checkpoint",
    "CheckpointError",
    "ConditionalUNet",
    "EditRequest",
    "GuidanceScales",
    "NoiseSchedule",
    "NumericDivergenceError",
    "RealismConfig",
    "SampleRequest",
    "TrainConfig",
    "UNetConfig",
    "analytic_gaussian_eps",
    "condition_dropout",
    "ddpm_step",
    "decode_png",
    "encode_png",
    "guided_epsilon",
    "hybrid_loss",
    "ilvr_refine",
    "l_simple",
    "l_vlb_term",
    "load_checkpoint",
    "local_edit",
    "lowpass",
    "lowpass_size",
    "make_linear_schedule",
    "model_variance",
    "null_condition",
    "posterior_mean_from_eps",
    "q_sample",
    "region_fill",
    "sample",
    "save_checkpoint",
    "scaled_linear_schedule",
    "stroke_mask",
    "to_file_space",
    "to_model_space",
    "train_stage",
]
