/** Pure pixel operations: layer flattening, model-resolution export, and a
 * mirror of the server's sketch/stroke extraction thresholds.
 *
 * The server splits a drawing by two rules: pixels with grayscale value at
 * most 50 are sketch lines, and pixels whose channel spread exceeds 2 are
 * colored strokes. Exports must therefore emit pure black lines, saturated
 * stroke colors, and pure white background.
 */

import type { Raster } from "./types.js";

export const LINE_GRAY_MAX = 50;
export const SATURATION_SPREAD_MIN = 2;

export function makeRaster(width: number, height: number): Raster {
  return { width, height, data: new Uint8ClampedArray(width * height * 4) };
}

export function fillWhite(raster: Raster): Raster {
  raster.data.fill(255);
  return raster;
}

function index(raster: Raster, x: number, y: number): number {
  return (y * raster.width + x) * 4;
}

export function setPixel(
  raster: Raster,
  x: number,
  y: number,
  rgba: [number, number, number, number],
): void {
  const i = index(raster, x, y);
  raster.data[i] = rgba[0];
  raster.data[i + 1] = rgba[1];
  raster.data[i + 2] = rgba[2];
  raster.data[i + 3] = rgba[3];
}

export function grayValue(r: number, g: number, b: number): number {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

export function channelSpread(r: number, g: number, b: number): number {
  return Math.max(r, g, b) - Math.min(r, g, b);
}

/** Flatten drawing layers exactly as the server-side composition expects:
 * black sketch lines over stroke colors over a white background. */
export function flattenLayers(sketch: Raster, stroke: Raster): Raster {
  if (sketch.width !== stroke.width || sketch.height !== stroke.height) {
    throw new Error("layer sizes differ");
  }
  const out = fillWhite(makeRaster(sketch.width, sketch.height));
  for (let i = 0; i < out.data.length; i += 4) {
    const strokeAlpha = stroke.data[i + 3];
    if (strokeAlpha > 0) {
      out.data[i] = stroke.data[i];
      out.data[i + 1] = stroke.data[i + 1];
      out.data[i + 2] = stroke.data[i + 2];
    }
    if (sketch.data[i + 3] > 127) {
      out.data[i] = 0;
      out.data[i + 1] = 0;
      out.data[i + 2] = 0;
    }
  }
  return out;
}

/** Downscale the drawing to the model resolution.
 *
 * The sketch layer uses an edge-preserving rule (a cell becomes a line if
 * any covered pixel is drawn) so thin pen lines survive; the stroke layer
 * is area-averaged over white. Lines win over strokes, matching the
 * flattening rule.
 */
export function exportDrawing(
  sketch: Raster,
  stroke: Raster,
  modelSize: number,
): Raster {
  if (sketch.width !== stroke.width || sketch.height !== stroke.height) {
    throw new Error("layer sizes differ");
  }
  if (sketch.width % modelSize !== 0) {
    throw new Error(
      `display size ${sketch.width} must be a multiple of model size ${modelSize}`,
    );
  }
  const cell = sketch.width / modelSize;
  const out = fillWhite(makeRaster(modelSize, modelSize));
  for (let cy = 0; cy < modelSize; cy++) {
    for (let cx = 0; cx < modelSize; cx++) {
      let hasLine = false;
      let r = 0;
      let g = 0;
      let b = 0;
      for (let y = cy * cell; y < (cy + 1) * cell; y++) {
        for (let x = cx * cell; x < (cx + 1) * cell; x++) {
          const i = index(sketch, x, y);
          if (sketch.data[i + 3] > 127) hasLine = true;
          const alpha = stroke.data[i + 3] / 255;
          r += stroke.data[i] * alpha + 255 * (1 - alpha);
          g += stroke.data[i + 1] * alpha + 255 * (1 - alpha);
          b += stroke.data[i + 2] * alpha + 255 * (1 - alpha);
        }
      }
      const area = cell * cell;
      if (hasLine) {
        setPixel(out, cx, cy, [0, 0, 0, 255]);
      } else {
        setPixel(out, cx, cy, [
          Math.round(r / area),
          Math.round(g / area),
          Math.round(b / area),
          255,
        ]);
      }
    }
  }
  return out;
}

export interface ExtractedDrawing {
  /** true where the server would classify the pixel as a sketch line */
  lines: boolean[];
  /** true where the server would keep the pixel as stroke color */
  colored: boolean[];
}

/** Mirror of the server-side extraction thresholds, used to verify exports
 * round-trip before anything is submitted. */
export function extractDrawing(raster: Raster): ExtractedDrawing {
  const n = raster.width * raster.height;
  const lines = new Array<boolean>(n);
  const colored = new Array<boolean>(n);
  for (let p = 0; p < n; p++) {
    const i = p * 4;
    const r = raster.data[i];
    const g = raster.data[i + 1];
    const b = raster.data[i + 2];
    lines[p] = grayValue(r, g, b) <= LINE_GRAY_MAX;
    colored[p] = channelSpread(r, g, b) > SATURATION_SPREAD_MIN;
  }
  return { lines, colored };
}

export function rastersEqual(a: Raster, b: Raster): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.data.length; i++) {
    if (a.data[i] !== b.data[i]) return false;
  }
  return true;
}
