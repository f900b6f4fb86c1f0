import numpy as np
import pytest
import torch

from diss.checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from diss.guidance import null_condition
from diss.unet import ConditionalUNet, UNetConfig


def _inputs(config, batch=2, seed=0):
    gen = torch.Generator().manual_seed(seed)
    s = config.image_size
    x = torch.randn(batch, 3, s, s, generator=gen)
    t = torch.randint(1, 50, (batch,), generator=gen)
    sketch = torch.randn(batch, 1, s, s, generator=gen)
    stroke = torch.randn(batch, 3, s, s, generator=gen)
    return x, t, sketch, stroke


class TestConfig:
    def test_default_channel_contract(self):
        from diss.unet import IN_CHANNELS, OUT_CHANNELS

        assert IN_CHANNELS == 7 and OUT_CHANNELS == 6

    def test_size_divisibility_enforced(self):
        with pytest.raises(ValueError):
            UNetConfig(image_size=30, channel_multipliers=(1, 2, 4))

    def test_dict_round_trip(self, tiny_config):
        assert UNetConfig.from_dict(tiny_config.to_dict()) == tiny_config


class TestPredict:
    def test_deterministic_repeated_calls(self, tiny_net, tiny_config):
        s = tiny_config.image_size
        gen = torch.Generator().manual_seed(1)
        x = torch.randn(3, s, s, generator=gen)
        sk = torch.randn(1, s, s, generator=gen)
        st = torch.randn(3, s, s, generator=gen)
        with torch.no_grad():
            eps1, v1 = tiny_net.predict(x, 5, sk, st)
            eps2, v2 = tiny_net.predict(x, 5, sk, st)
        assert torch.equal(eps1, eps2) and torch.equal(v1, v2)
        assert eps1.shape == (3, s, s) and v1.shape == (3, s, s)
        assert torch.isfinite(eps1).all()

    def test_batch_permutation_equivariance(self, tiny_net, tiny_config):
        x, t, sk, st = _inputs(tiny_config, batch=3)
        perm = torch.tensor([2, 0, 1])
        with torch.no_grad():
            out = tiny_net(x, t, sk, st)
            out_perm = tiny_net(x[perm], t[perm], sk[perm], st[perm])
        assert torch.allclose(out[perm], out_perm, atol=1e-6)

    def test_shape_validation(self, tiny_net, tiny_config):
        s = tiny_config.image_size
        with pytest.raises(ValueError, match="c_sketch"):
            tiny_net.predict(torch.zeros(3, s, s), 1, torch.zeros(1, s + 2, s + 2), torch.zeros(3, s, s))
        with pytest.raises(ValueError, match="x_t"):
            tiny_net.predict(torch.zeros(3, s, 2 * s), 1, torch.zeros(1, s, s), torch.zeros(3, s, s))
        with pytest.raises(ValueError, match="t must be"):
            tiny_net.predict(torch.zeros(3, s, s), 0, torch.zeros(1, s, s), torch.zeros(3, s, s))

    def test_null_conditions_give_fixed_unconditional_output(self, tiny_net, tiny_config):
        s = tiny_config.image_size
        x = torch.randn(3, s, s)
        with torch.no_grad():
            a = tiny_net.predict(x, 3, null_condition(1, s), null_condition(3, s))
            b = tiny_net.predict(x, 3, null_condition(1, s), null_condition(3, s))
        assert torch.equal(a[0], b[0])

    def test_finite_difference_gradients(self, tiny_config):
        """Central differences on 10 random parameters vs autograd, float64."""
        torch.manual_seed(7)
        net = ConditionalUNet(tiny_config).double()
        x, t, sk, st = _inputs(tiny_config, batch=1)
        x, sk, st = x.double(), sk.double(), st.double()
        target = torch.randn_like(net(x, t, sk, st))

        def loss_value():
            return ((net(x, t, sk, st) - target) ** 2).mean()

        loss = loss_value()
        loss.backward()
        params = [p for p in net.parameters() if p.grad is not None]
        rng = np.random.default_rng(0)
        step = 1e-4
        checked = 0
        while checked < 10:
            p = params[int(rng.integers(len(params)))]
            idx = tuple(int(rng.integers(s)) for s in p.shape)
            analytic = float(p.grad[idx])
            if abs(analytic) < 1e-8:
                continue
            with torch.no_grad():
                original = float(p[idx])
                p[idx] = original + step
                up = float(loss_value())
                p[idx] = original - step
                down = float(loss_value())
                p[idx] = original
            numeric = (up - down) / (2 * step)
            assert abs(numeric - analytic) / max(abs(analytic), 1e-12) < 1e-3
            checked += 1


class TestCheckpoint:
    def test_round_trip_byte_identical(self, tiny_net, tmp_path):
        ckpt = Checkpoint.from_network(tiny_net, stage=1, step=10, schedule={"steps": 50})
        path = tmp_path / "net.ckpt"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.metadata["stage"] == 1
        assert set(loaded.tensors) == set(ckpt.tensors)
        for name, tensor in ckpt.tensors.items():
            assert (
                loaded.tensors[name].numpy().tobytes() == tensor.numpy().tobytes()
            ), name

    def test_save_load_save_stable(self, tiny_net, tmp_path):
        ckpt = Checkpoint.from_network(tiny_net)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(ckpt, p1)
        save_checkpoint(load_checkpoint(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_file_rejected(self, tiny_net, tmp_path):
        path = tmp_path / "net.ckpt"
        save_checkpoint(Checkpoint.from_network(tiny_net), path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "net.ckpt"
        path.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_version_mismatch_rejected(self, tiny_net, tmp_path):
        path = tmp_path / "net.ckpt"
        save_checkpoint(Checkpoint.from_network(tiny_net), path)
        data = bytearray(path.read_bytes())
        data[4] = 99
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_config_mismatch_rejected(self, tiny_net, tiny_config):
        other = ConditionalUNet(
            UNetConfig(
                image_size=tiny_config.image_size * 2,
                base_channels=tiny_config.base_channels,
                channel_multipliers=tiny_config.channel_multipliers,
                res_blocks_per_level=tiny_config.res_blocks_per_level,
                attention_resolutions=tiny_config.attention_resolutions,
                attention_head_channels=tiny_config.attention_head_channels,
                time_embedding_dim=tiny_config.time_embedding_dim,
            )
        )
        ckpt = Checkpoint.from_network(tiny_net)
        with pytest.raises(CheckpointError, match="config"):
            ckpt.apply_to(other)

    def test_missing_tensor_rejected(self, tiny_net):
        ckpt = Checkpoint.from_network(tiny_net)
        ckpt.tensors.pop(next(iter(ckpt.tensors)))
        with pytest.raises(CheckpointError, match="missing"):
            ckpt.apply_to(tiny_net)

    def test_build_network_reproduces_outputs(self, tiny_net, tiny_config, tmp_path):
        path = tmp_path / "net.ckpt"
        save_checkpoint(Checkpoint.from_network(tiny_net), path)
        rebuilt = load_checkpoint(path).build_network()
        x, t, sk, st = _inputs(tiny_config)
        with torch.no_grad():
            assert torch.equal(tiny_net(x, t, sk, st), rebuilt(x, t, sk, st))
