"""Versioned checkpoint container.

Layout: an 8-byte magic/version header, a JSON metadata document (network
config, training stage and step, schedule parameters, tensor manifest),
then the named parameter blobs as raw little-endian float32, in manifest
order. Parameter bytes round-trip exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .unet import ConditionalUNet, UNetConfig

MAGIC = b"DSCK"
VERSION = 1


class CheckpointError(Exception):
    """Corrupt file, wrong version, or a network/config mismatch."""


@dataclass
class Checkpoint:
    metadata: dict = field(default_factory=dict)
    tensors: dict[str, torch.Tensor] = field(default_factory=dict)

    @property
    def config(self) -> UNetConfig:
        return UNetConfig.from_dict(self.metadata["config"])

    @classmethod
    def from_network(cls, net: ConditionalUNet, **extra) -> "Checkpoint":
        tensors = {
            name: p.detach().to(torch.float32).cpu().clone()
            for name, p in net.state_dict().items()
        }
        metadata = {"config": net.config.to_dict(), **extra}
        return cls(metadata=metadata, tensors=tensors)

    def build_network(self) -> ConditionalUNet:
        net = ConditionalUNet(self.config)
        self.apply_to(net)
        return net

    def apply_to(self, net: ConditionalUNet) -> None:
        if net.config.to_dict() != self.metadata.get("config"):
            raise CheckpointError(
                f"checkpoint config {self.metadata.get('config')} does not match "
                f"network config {net.config.to_dict()}"
            )
        missing = [k for k in net.state_dict() if k not in self.tensors]
        if missing:
            raise CheckpointError(f"checkpoint missing tensors: {missing[:5]}")
        net.load_state_dict({k: v.to(net.dtype) for k, v in self.tensors.items()})


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = [
        {"name": name, "shape": list(tensor.shape)} for name, tensor in ckpt.tensors.items()
    ]
    meta = dict(ckpt.metadata)
    meta["tensor_manifest"] = manifest
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(meta_bytes)))
        f.write(meta_bytes)
        for entry in manifest:
            blob = ckpt.tensors[entry["name"]].detach().to(torch.float32).cpu()
            f.write(np.ascontiguousarray(blob.numpy()).astype("<f4").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
    if len(data) < 16 or data[:4] != MAGIC:
        raise CheckpointError(f"not a checkpoint file (bad magic): {path}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    (meta_len,) = struct.unpack_from("<Q", data, 8)
    meta_end = 16 + meta_len
    if meta_end > len(data):
        raise CheckpointError("truncated checkpoint: metadata incomplete")
    try:
        meta = json.loads(data[16:meta_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from exc
    manifest = meta.pop("tensor_manifest", None)
    if manifest is None:
        raise CheckpointError("corrupt checkpoint: missing tensor manifest")
    tensors: dict[str, torch.Tensor] = {}
    offset = meta_end
    for entry in manifest:
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(data):
            raise CheckpointError(f"truncated checkpoint: tensor {entry['name']} incomplete")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        tensors[entry["name"]] = torch.from_numpy(arr.copy())
        offset += nbytes
    if offset != len(data):
        raise CheckpointError("corrupt checkpoint: trailing bytes after tensor payload")
    return Checkpoint(metadata=meta, tensors=tensors)
