"""Consistency metrics between generated images and their drawing inputs.

Sketch agreement is measured as the symmetric Chamfer distance between
the line pixels of the input sketch and an edge map extracted from the
output. Stroke agreement is the RMS difference of the low-frequency bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np
import torch
from scipy.spatial import cKDTree

from .images import validate_image
from .realism import lowpass
from .sampler import SampleRequest, sample

EDGE_PERCENTILE = 90.0
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def edge_map(image: torch.Tensor) -> torch.Tensor:
    """Binary (1, H, W) edge image: Sobel magnitude on luma, thresholded at
    its 90th percentile and thinned to single-pixel lines."""
    validate_image(image, channels=3, name="image")
    luma = (
        LUMA_WEIGHTS[0] * image[0] + LUMA_WEIGHTS[1] * image[1] + LUMA_WEIGHTS[2] * image[2]
    ).to(torch.float64)
    padded = torch.nn.functional.pad(luma[None, None], (1, 1, 1, 1), mode="replicate")[0, 0]
    kx = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]], dtype=torch.float64)
    ky = kx.T
    gx = torch.nn.functional.conv2d(padded[None, None], kx[None, None])[0, 0]
    gy = torch.nn.functional.conv2d(padded[None, None], ky[None, None])[0, 0]
    mag = torch.sqrt(gx**2 + gy**2)

    threshold = torch.quantile(mag.flatten(), EDGE_PERCENTILE / 100.0)
    candidates = (mag >= threshold) & (mag > 0)
    if not candidates.any():
        return torch.zeros(1, *image.shape[1:], dtype=image.dtype)

    # Non-maximum suppression along the quantized gradient direction;
    # ties break toward one side so double-width responses thin to 1 px.
    angle = torch.atan2(gy, gx)
    bins = torch.round(angle / (math.pi / 4.0)).to(torch.int64) % 4
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    h, w = mag.shape
    keep = torch.zeros_like(candidates)
    big = torch.full((h + 2, w + 2), -1.0, dtype=torch.float64)
    big[1:-1, 1:-1] = mag
    ys, xs = torch.nonzero(candidates, as_tuple=True)
    for direction, (dy, dx) in offsets.items():
        sel = bins[ys, xs] == direction
        y_sel, x_sel = ys[sel], xs[sel]
        prev = big[1 + y_sel - dy, 1 + x_sel - dx]
        nxt = big[1 + y_sel + dy, 1 + x_sel + dx]
        ok = (mag[y_sel, x_sel] >= prev) & (mag[y_sel, x_sel] > nxt)
        keep[y_sel[ok], x_sel[ok]] = True
    return keep[None].to(image.dtype)


def _line_points(binary: torch.Tensor) -> np.ndarray:
    ys, xs = torch.nonzero(binary, as_tuple=True)
    return np.stack([ys.numpy(), xs.numpy()], axis=1).astype(np.float64)


def chamfer_distance(points_a: np.ndarray, points_b: np.ndarray, diagonal: float) -> float:
    """Symmetric mean nearest-neighbor distance between two pixel sets.

    Zero when both sets are empty; the image diagonal when exactly one is.
    """
    if len(points_a) == 0 and len(points_b) == 0:
        return 0.0
    if len(points_a) == 0 or len(points_b) == 0:
        return diagonal
    d_ab = cKDTree(points_b).query(points_a)[0].mean()
    d_ba = cKDTree(points_a).query(points_b)[0].mean()
    return float((d_ab + d_ba) / 2.0)


def sketch_consistency(output: torch.Tensor, c_sketch: torch.Tensor) -> float:
    """Chamfer distance between the output's edge map and the sketch lines."""
    validate_image(output, channels=3, name="output")
    validate_image(c_sketch, channels=1, name="c_sketch")
    if output.shape[1:] != c_sketch.shape[1:]:
        raise ValueError("output and sketch sizes differ")
    h, w = output.shape[1:]
    edges = _line_points(edge_map(output)[0] > 0.5)
    lines = _line_points(c_sketch[0] < 0.0)
    return chamfer_distance(edges, lines, math.hypot(h, w))


def stroke_consistency(output: torch.Tensor, reference: torch.Tensor) -> float:
    """RMS difference of the low-frequency bands at size/8."""
    validate_image(output, channels=3, name="output")
    validate_image(reference, channels=3, name="reference")
    n = max(1, output.shape[-1] // 8)
    diff = lowpass(output, n) - lowpass(reference, n)
    return float(torch.sqrt((diff**2).mean()))


@dataclass(frozen=True)
class ConsistencyRecord:
    s_realism: float
    seed: int
    sketch_distance: float
    stroke_distance: float


@dataclass(frozen=True)
class ConsistencyReport:
    records: tuple[ConsistencyRecord, ...]

    def for_scale(self, s_realism: float) -> list[ConsistencyRecord]:
        return [r for r in self.records if r.s_realism == s_realism]

    def median_stroke_by_scale(self) -> dict[float, float]:
        return {
            s: float(np.median([r.stroke_distance for r in self.for_scale(s)]))
            for s in sorted({r.s_realism for r in self.records}, reverse=True)
        }

    def median_sketch_by_scale(self) -> dict[float, float]:
        return {
            s: float(np.median([r.sketch_distance for r in self.for_scale(s)]))
            for s in sorted({r.s_realism for r in self.records}, reverse=True)
        }

    def summary_lines(self) -> list[str]:
        lines = [
            f"s_realism={r.s_realism:.2f} seed={r.seed} "
            f"sketch={r.sketch_distance:.4f} stroke={r.stroke_distance:.4f}"
            for r in self.records
        ]
        for s, med in self.median_stroke_by_scale().items():
            lines.append(f"median s_realism={s:.2f} stroke={med:.4f}")
        return lines


def realism_tradeoff_curve(
    net,
    request: SampleRequest,
    s_values: list[float],
    sched,
    seeds: list[int] | None = None,
) -> ConsistencyReport:
    """Sample once per (s_realism, seed) pair with everything else fixed and
    report both consistency distances; s_values must be sorted descending."""
    if request.realism is None:
        raise ValueError("request must carry a realism config to sweep")
    if sorted(s_values, reverse=True) != list(s_values):
        raise ValueError("s_values must be sorted descending in s_realism")
    seeds = seeds if seeds is not None else [request.seed]
    reference = request.c_comb
    if reference is None:
        from .data import compose_comb

        reference = compose_comb(request.c_sketch, request.c_stroke)
    records = []
    for s in s_values:
        for seed in seeds:
            req = dc_replace(
                request, realism=dc_replace(request.realism, s_realism=s), seed=seed
            )
            out = sample(req, net, sched)
            records.append(
                ConsistencyRecord(
                    s_realism=s,
                    seed=seed,
                    sketch_distance=sketch_consistency(out, request.c_sketch),
                    stroke_distance=stroke_consistency(out, reference),
                )
            )
    return ConsistencyReport(records=tuple(records))
