"""Synthetic paired dataset and drawing decomposition.

Training pairs are generated procedurally: anti-aliased colored shapes on
a textured background, with the shape outlines as the sketch and a
block-quantized copy as the stroke image. User drawings are split into
sketch and stroke by thresholding: dark pixels become the sketch, and
unsaturated pixels are whitened out of the stroke.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw

from .images import check_same_shape, decode_png, encode_png, to_file_space, to_model_space, validate_image

LINE_LEVEL = 50  # file-space grayscale at or below which a pixel is a sketch line
LINE_LEVEL_MODEL = LINE_LEVEL / 127.5 - 1.0
SATURATION_TOLERANCE = 2  # file-space max-min spread treated as colorless
SUPERSAMPLE = 4
MIN_SIZE = 16


@dataclass(frozen=True)
class TrainingExample:
    photo: torch.Tensor
    sketch: torch.Tensor
    stroke: torch.Tensor
    comb: torch.Tensor


def _luma(bytes_rgb: np.ndarray) -> np.ndarray:
    r, g, b = bytes_rgb[..., 0], bytes_rgb[..., 1], bytes_rgb[..., 2]
    return 0.299 * r + 0.587 * g + 0.114 * b


def _saturation_spread(bytes_rgb: np.ndarray) -> np.ndarray:
    return bytes_rgb.max(axis=-1).astype(np.int16) - bytes_rgb.min(axis=-1).astype(np.int16)


def _textured_background(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth low-frequency color field, kept away from both extremes."""
    base = rng.uniform(120, 210, size=3)
    coarse = rng.normal(0.0, 18.0, size=(size // 8 + 1, size // 8 + 1, 3))
    field = np.array(
        Image.fromarray(np.uint8(np.clip(coarse + 128, 0, 255))).resize(
            (size, size), Image.BILINEAR
        ),
        dtype=np.float64,
    ) - 128.0
    return np.clip(base[None, None, :] + field, 60, 245)


def _random_shape_color(rng: np.random.Generator, background: np.ndarray) -> tuple[int, int, int]:
    """Saturated color with enough contrast against the mean background."""
    bg_mean = background.reshape(-1, 3).mean(axis=0)
    for _ in range(64):
        color = rng.uniform(30, 230, size=3)
        color[rng.integers(0, 3)] = rng.uniform(150, 240)
        color[rng.integers(0, 3)] = rng.uniform(20, 90)
        if color.max() - color.min() >= 70 and np.abs(color - bg_mean).sum() >= 120:
            return tuple(int(c) for c in color)
    return (200, 40, 40)


def _shape_geometry(
    rng: np.random.Generator, size: int, occupied: list[tuple[float, float, float]]
) -> tuple[float, float, float] | None:
    """Center and radius for a new shape that avoids existing ones."""
    for _ in range(32):
        radius = rng.uniform(0.14, 0.3) * size
        cx = rng.uniform(radius + 1, size - radius - 1)
        cy = rng.uniform(radius + 1, size - radius - 1)
        if all(
            np.hypot(cx - ox, cy - oy) > radius + orad + 2 for ox, oy, orad in occupied
        ):
            return cx, cy, radius
    return None


def synth_example(rng: np.random.Generator, size: int) -> TrainingExample:
    """One procedurally generated photo/sketch/stroke triple.

    Shapes are drawn supersampled and downscaled for anti-aliasing; the
    sketch gets 2-px outlines, and the stroke is the photo averaged over a
    size/8 block grid with non-shape blocks whitened.
    """
    if size < MIN_SIZE:
        raise ValueError(f"size must be >= {MIN_SIZE}, got {size}")
    hi = size * SUPERSAMPLE
    background = _textured_background(rng, size)
    photo_img = Image.fromarray(np.uint8(background.round())).resize((hi, hi), Image.NEAREST)
    sketch_img = Image.new("L", (hi, hi), 255)
    mask_img = Image.new("L", (hi, hi), 0)
    photo_draw = ImageDraw.Draw(photo_img)
    sketch_draw = ImageDraw.Draw(sketch_img)
    mask_draw = ImageDraw.Draw(mask_img)

    occupied: list[tuple[float, float, float]] = []
    n_shapes = int(rng.integers(1, 4))
    outline_width = 2 * SUPERSAMPLE
    for _ in range(n_shapes):
        geom = _shape_geometry(rng, size, occupied)
        if geom is None:
            continue
        cx, cy, radius = geom
        occupied.append(geom)
        color = _random_shape_color(rng, background)
        kind = rng.choice(["ellipse", "polygon"])
        if kind == "ellipse":
            ry = radius * rng.uniform(0.6, 1.0)
            box = [
                (cx - radius) * SUPERSAMPLE,
                (cy - ry) * SUPERSAMPLE,
                (cx + radius) * SUPERSAMPLE,
                (cy + ry) * SUPERSAMPLE,
            ]
            photo_draw.ellipse(box, fill=color)
            mask_draw.ellipse(box, fill=255)
            sketch_draw.ellipse(box, outline=0, width=outline_width)
        else:
            n_vertices = int(rng.integers(3, 7))
            angles = np.sort(rng.uniform(0, 2 * np.pi, size=n_vertices))
            radii = radius * rng.uniform(0.7, 1.0, size=n_vertices)
            points = [
                (
                    (cx + r * np.cos(a)) * SUPERSAMPLE,
                    (cy + r * np.sin(a)) * SUPERSAMPLE,
                )
                for a, r in zip(angles, radii)
            ]
            photo_draw.polygon(points, fill=color)
            mask_draw.polygon(points, fill=255)
            sketch_draw.line(points + [points[0]], fill=0, width=outline_width, joint="curve")

    photo = np.asarray(photo_img.resize((size, size), Image.BOX), dtype=np.float64)
    sketch = np.asarray(sketch_img.resize((size, size), Image.BOX), dtype=np.float64)
    mask = np.asarray(mask_img.resize((size, size), Image.BOX), dtype=np.float64) / 255.0

    block = max(1, size // 8)
    stroke = np.full_like(photo, 255.0)
    colored_any = False
    for y0 in range(0, size, block):
        for x0 in range(0, size, block):
            ys = slice(y0, min(y0 + block, size))
            xs = slice(x0, min(x0 + block, size))
            if mask[ys, xs].mean() > 0.5:
                stroke[ys, xs] = photo[ys, xs].mean(axis=(0, 1))
                colored_any = True
    if not colored_any and occupied:
        # thin shapes can miss every aligned block; pin the center block
        cx, cy, _ = occupied[0]
        y0 = min(int(cy) // block * block, size - block)
        x0 = min(int(cx) // block * block, size - block)
        ys, xs = slice(y0, y0 + block), slice(x0, x0 + block)
        stroke[ys, xs] = photo[ys, xs].mean(axis=(0, 1))

    photo_t = to_model_space(np.uint8(photo.round()))
    sketch_t = to_model_space(np.uint8(sketch.round()))
    stroke_t = to_model_space(np.uint8(stroke.round()))
    return TrainingExample(
        photo=photo_t,
        sketch=sketch_t,
        stroke=stroke_t,
        comb=compose_comb(sketch_t, stroke_t),
    )


def extract_sketch_stroke(comb: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Split a drawing into a binary sketch and a whitened stroke image.

    Pixels at or below grayscale 50 become sketch lines; pixels without
    visible saturation are replaced by white in the stroke.
    """
    validate_image(comb, channels=3, name="comb")
    bytes_rgb = to_file_space(comb).astype(np.float64)
    gray = _luma(bytes_rgb)
    sketch = np.where(gray <= LINE_LEVEL, 0, 255).astype(np.uint8)

    spread = _saturation_spread(np.uint8(bytes_rgb.round()))
    colored = spread > SATURATION_TOLERANCE
    stroke = np.where(colored[..., None], bytes_rgb, 255.0).astype(np.uint8)
    return to_model_space(sketch), to_model_space(stroke)


def compose_comb(sketch: torch.Tensor, stroke: torch.Tensor) -> torch.Tensor:
    """Combined reference: sketch lines painted black over the stroke image."""
    validate_image(sketch, channels=1, name="sketch")
    validate_image(stroke, channels=3, name="stroke")
    check_same_shape(sketch[:1], stroke[:1], "sketch and stroke spatial planes")
    line = sketch[0] <= LINE_LEVEL_MODEL
    return torch.where(line[None], torch.tensor(-1.0, dtype=stroke.dtype), stroke)


@dataclass
class DatasetManifest:
    seed: int
    size: int
    count: int
    content_hash: str


def write_dataset(root: str | Path, count: int, size: int, seed: int) -> DatasetManifest:
    """Generate ``count`` examples under root/{photo,sketch,stroke}/NNNN.png.

    The manifest records the generation parameters and a content hash over
    every PNG, so identical parameters yield an identical manifest.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    digest = hashlib.sha256()
    for sub in ("photo", "sketch", "stroke"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for i in range(count):
        example = synth_example(rng, size)
        for sub, tensor in (
            ("photo", example.photo),
            ("sketch", example.sketch),
            ("stroke", example.stroke),
        ):
            data = encode_png(tensor, root / sub / f"{i:04d}.png")
            digest.update(data)
    manifest = DatasetManifest(
        seed=seed, size=size, count=count, content_hash=digest.hexdigest()
    )
    (root / "manifest.json").write_text(json.dumps(manifest.__dict__, indent=2))
    return manifest


def load_dataset(root: str | Path) -> list[tuple[torch.Tensor, torch.Tensor, torch.Tensor]]:
    """Read a generated dataset back as (photo, sketch, stroke) tensors."""
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    examples = []
    for i in range(manifest["count"]):
        photo = decode_png(root / "photo" / f"{i:04d}.png")
        sketch = decode_png(root / "sketch" / f"{i:04d}.png")
        stroke = decode_png(root / "stroke" / f"{i:04d}.png")
        examples.append((photo, sketch, stroke))
    return examples
