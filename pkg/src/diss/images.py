"""Image tensors and pixel-space conversions.

Images are torch tensors in channel-major (C, H, W) layout. Data and
conditions live in model space [-1, 1]; files store 8-bit bytes. The two
spaces are linked by ``v_model = v_byte / 127.5 - 1`` and its clamped,
rounded inverse.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import torch
from PIL import Image


class ImageFormatError(ValueError):
    """Raised for unreadable files or unsupported pixel formats."""


def validate_image(x: torch.Tensor, *, channels: int | None = None, name: str = "image") -> None:
    """Check layout, positive dimensions, and finiteness at a boundary."""
    if x.ndim != 3:
        raise ValueError(f"{name}: expected (C, H, W) tensor, got shape {tuple(x.shape)}")
    c, h, w = x.shape
    if channels is not None and c != channels:
        raise ValueError(f"{name}: expected {channels} channels, got {c}")
    if h <= 0 or w <= 0:
        raise ValueError(f"{name}: dimensions must be positive, got {h}x{w}")
    if not torch.isfinite(x).all():
        raise ValueError(f"{name}: contains non-finite values")


def check_same_shape(a: torch.Tensor, b: torch.Tensor, names: str = "operands") -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch between {names}: {tuple(a.shape)} vs {tuple(b.shape)}")


def to_model_space(bytes_img: np.ndarray) -> torch.Tensor:
    """Map uint8 (H, W) or (H, W, C) pixels to a float32 (C, H, W) tensor in [-1, 1]."""
    arr = np.asarray(bytes_img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    arr = arr.astype(np.float32) / 127.5 - 1.0
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))


def to_file_space(x: torch.Tensor) -> np.ndarray:
    """Map a (C, H, W) model-space tensor to uint8 (H, W, C) bytes.

    Values are clamped to [-1, 1] and rounded half-up, so quantization is
    the only loss on the round trip.
    """
    arr = x.detach().to(torch.float64).clamp(-1.0, 1.0).numpy()
    bytes_arr = np.floor((arr + 1.0) * 127.5 + 0.5)
    return np.clip(bytes_arr, 0, 255).astype(np.uint8).transpose(1, 2, 0)


def decode_png(source: str | Path | bytes) -> torch.Tensor:
    """Load an 8-bit gray or RGB PNG as a model-space tensor.

    Accepts a path or raw PNG bytes. 16-bit and palette-with-alpha inputs
    are rejected rather than silently converted.
    """
    try:
        img = Image.open(io.BytesIO(source) if isinstance(source, bytes) else source)
        img.load()
    except Exception as exc:
        raise ImageFormatError(f"unreadable image: {exc}") from exc
    if img.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
        raise ImageFormatError(f"unsupported bit depth (mode {img.mode}); only 8-bit images are supported")
    if img.mode == "P":
        img = img.convert("RGB")
    if img.mode == "LA" or img.mode == "RGBA":
        background = Image.new("RGB", img.size, (255, 255, 255))
        background.paste(img.convert("RGBA"), mask=img.convert("RGBA").split()[-1])
        img = background
    if img.mode not in ("L", "RGB"):
        raise ImageFormatError(f"unsupported image mode {img.mode}")
    return to_model_space(np.asarray(img))


def encode_png(x: torch.Tensor, path: str | Path | None = None) -> bytes:
    """Write a model-space tensor as an 8-bit PNG; returns the encoded bytes."""
    validate_image(x)
    arr = to_file_space(x)
    if arr.shape[2] == 1:
        img = Image.fromarray(arr[:, :, 0], mode="L")
    elif arr.shape[2] == 3:
        img = Image.fromarray(arr, mode="RGB")
    else:
        raise ImageFormatError(f"cannot encode {arr.shape[2]}-channel image as PNG")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    data = buf.getvalue()
    if path is not None:
        Path(path).write_bytes(data)
    return data
