import pytest
import torch

from conftest import StubDenoiser, make_conditions
from diss.guidance import GuidanceScales, guided_epsilon, null_condition
from diss.images import to_file_space


class TestNullCondition:
    def test_single_channel(self):
        out = null_condition(1, 32)
        assert out.shape == (1, 32, 32)
        assert (out == 0).all()

    def test_three_channel(self):
        out = null_condition(3, 32)
        assert out.shape == (3, 32, 32)
        assert (out == 0).all()

    def test_invalid_channels(self):
        with pytest.raises(ValueError):
            null_condition(2, 32)

    def test_encodes_to_gray_128(self):
        assert (to_file_space(null_condition(3, 8)) == 128).all()


class TestGuidanceScales:
    def test_defaults(self):
        scales = GuidanceScales()
        assert scales.s_sketch == 2.0 and scales.s_stroke == 2.0

    @pytest.mark.parametrize("bad", [-0.1, float("nan"), float("inf")])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            GuidanceScales(s_sketch=bad)
        with pytest.raises(ValueError):
            GuidanceScales(s_stroke=bad)


class TestGuidedEpsilon:
    def run(self, stub, s_sketch, s_stroke, size=8):
        sketch, stroke = make_conditions(size)
        x = torch.zeros(3, size, size)
        return guided_epsilon(stub, x, 1, sketch, stroke, GuidanceScales(s_sketch, s_stroke))

    def test_zero_scales_reduce_to_unconditional_bitwise(self, stub_denoiser):
        eps, _ = self.run(stub_denoiser, 0.0, 0.0)
        expected, _ = stub_denoiser.predict(
            torch.zeros(3, 8, 8), 1, null_condition(1, 8), null_condition(3, 8)
        )
        assert torch.equal(eps, expected)

    def test_unit_sketch_scale_reduces_to_sketch_prediction(self, stub_denoiser):
        eps, _ = self.run(stub_denoiser, 1.0, 0.0)
        assert torch.equal(eps, torch.full((3, 8, 8), 1.0))

    def test_unit_stroke_scale_reduces_to_stroke_prediction(self, stub_denoiser):
        eps, _ = self.run(stub_denoiser, 0.0, 1.0)
        assert torch.equal(eps, torch.full((3, 8, 8), 2.0))

    def test_linear_combination_example(self, stub_denoiser):
        # 0 + 1.5 * (1 - 0) + 2 * (2 - 0) = 5.5
        eps, _ = self.run(stub_denoiser, 1.5, 2.0)
        assert torch.equal(eps, torch.full((3, 8, 8), 5.5))

    def test_exactly_three_evaluations(self, stub_denoiser):
        self.run(stub_denoiser, 1.5, 2.0)
        assert stub_denoiser.calls == 3
        self.run(stub_denoiser, 0.0, 0.0)
        assert stub_denoiser.calls == 6

    def test_variance_comes_from_unconditional_pass(self):
        stub = StubDenoiser(v=-0.25)
        _, v = self.run(stub, 3.0, 0.5)
        assert torch.equal(v, torch.full((3, 8, 8), -0.25))

    def test_affine_in_scales(self):
        """Superposition over the scale vector on exact stub arithmetic."""
        stub = StubDenoiser(eps_uncond=0.5, eps_sketch=1.0, eps_stroke=4.0)

        def value(s_sk, s_st):
            eps, _ = self.run(stub, s_sk, s_st)
            return eps

        base = value(0.0, 0.0)
        d_sketch = value(2.0, 0.0) - base
        d_stroke = value(0.0, 2.0) - base
        combined = value(2.0, 2.0)
        assert torch.equal(combined, base + d_sketch + d_stroke)
        half = value(1.0, 1.0)
        assert torch.equal(half, base + 0.5 * d_sketch + 0.5 * d_stroke)

    def test_symmetry_under_role_swap(self):
        forward = StubDenoiser(eps_uncond=0.0, eps_sketch=3.0, eps_stroke=7.0)
        swapped = StubDenoiser(eps_uncond=0.0, eps_sketch=7.0, eps_stroke=3.0)
        eps_a, _ = self.run(forward, 1.25, 0.75)
        eps_b, _ = self.run(swapped, 0.75, 1.25)
        assert torch.equal(eps_a, eps_b)

    def test_joint_condition_never_evaluated(self, stub_denoiser):
        # the stub raises if called with both conditions non-null
        self.run(stub_denoiser, 2.0, 2.0)
