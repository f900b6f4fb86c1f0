import numpy as np
import pytest
import torch

from diss.guidance import null_condition
from diss.schedule import make_linear_schedule, scaled_linear_schedule
from diss.unet import ConditionalUNet, UNetConfig


@pytest.fixture(scope="session")
def sched50():
    return scaled_linear_schedule(50)


@pytest.fixture(scope="session")
def sched_default():
    return make_linear_schedule(1000, 1e-4, 0.02)


@pytest.fixture
def tiny_config():
    return UNetConfig(
        image_size=16,
        base_channels=8,
        channel_multipliers=(1, 2),
        res_blocks_per_level=1,
        attention_resolutions=frozenset({8}),
        attention_head_channels=8,
        time_embedding_dim=32,
    )


@pytest.fixture
def tiny_net(tiny_config):
    torch.manual_seed(0)
    return ConditionalUNet(tiny_config)


class StubDenoiser:
    """Constant-output denoiser distinguishing the three guidance inputs.

    Returns eps_uncond / eps_sketch / eps_stroke depending on which
    condition is non-null, and counts evaluations.
    """

    def __init__(self, eps_uncond=0.0, eps_sketch=1.0, eps_stroke=2.0, v=-1.0, size=8):
        self.values = (eps_uncond, eps_sketch, eps_stroke)
        self.v = v
        self.size = size
        self.calls = 0

    def predict(self, x_t, t, c_sketch, c_stroke):
        self.calls += 1
        sketch_null = bool((c_sketch == 0).all())
        stroke_null = bool((c_stroke == 0).all())
        if sketch_null and stroke_null:
            value = self.values[0]
        elif not sketch_null and stroke_null:
            value = self.values[1]
        elif sketch_null and not stroke_null:
            value = self.values[2]
        else:
            raise AssertionError("joint-conditional prediction must never be requested")
        return torch.full_like(x_t, float(value)), torch.full_like(x_t, self.v)


@pytest.fixture
def stub_denoiser():
    return StubDenoiser()


def make_conditions(size=8, seed=0):
    """Non-null sketch/stroke pair for guidance and sampler tests."""
    rng = np.random.default_rng(seed)
    sketch = null_condition(1, size) + 1.0
    sketch[0, size // 2, :] = -1.0
    stroke = torch.ones(3, size, size)
    stroke[0, :, : size // 2] = float(rng.uniform(-0.5, 0.5))
    stroke[1, :, : size // 2] = -0.8
    return sketch, stroke
