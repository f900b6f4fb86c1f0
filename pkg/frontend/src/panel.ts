/** Control panel state: three scale sliders, mode, seed, and submit gating.
 * Values are clamped and quantized client-side so an out-of-range request
 * can never be built, mirroring the server's validation. */

import type { JobKind, JobPayload } from "./types.js";

export interface SliderSpec {
  min: number;
  max: number;
  step: number;
  default: number;
}

export const SLIDERS: Record<"s_sketch" | "s_stroke" | "s_realism", SliderSpec> = {
  s_sketch: { min: 0, max: 4, step: 0.1, default: 2.0 },
  s_stroke: { min: 0, max: 4, step: 0.1, default: 2.0 },
  s_realism: { min: 0, max: 1, step: 0.05, default: 1.0 },
};

export interface PanelState {
  sSketch: number;
  sStroke: number;
  sRealism: number;
  mode: JobKind;
  seed: number;
  jobRunning: boolean;
  hasOriginal: boolean;
}

export function defaultPanelState(): PanelState {
  return {
    sSketch: SLIDERS.s_sketch.default,
    sStroke: SLIDERS.s_stroke.default,
    sRealism: SLIDERS.s_realism.default,
    mode: "generate",
    seed: 0,
    jobRunning: false,
    hasOriginal: false,
  };
}

export function clampToSlider(value: number, spec: SliderSpec): number {
  if (!Number.isFinite(value)) return spec.default;
  const clamped = Math.min(spec.max, Math.max(spec.min, value));
  const steps = Math.round((clamped - spec.min) / spec.step);
  return Number((spec.min + steps * spec.step).toFixed(10));
}

export function normalizePanel(state: PanelState): PanelState {
  return {
    ...state,
    sSketch: clampToSlider(state.sSketch, SLIDERS.s_sketch),
    sStroke: clampToSlider(state.sStroke, SLIDERS.s_stroke),
    sRealism: clampToSlider(state.sRealism, SLIDERS.s_realism),
    seed: Number.isFinite(state.seed) ? Math.trunc(state.seed) : 0,
  };
}

export function canSubmit(state: PanelState): boolean {
  if (state.jobRunning) return false;
  if (state.mode === "edit" && !state.hasOriginal) return false;
  const normalized = normalizePanel(state);
  return (
    normalized.sSketch === state.sSketch &&
    normalized.sStroke === state.sStroke &&
    normalized.sRealism === state.sRealism
  );
}

/** Build the submission payload; all scales pass through the clamp so the
 * request is in-range by construction. */
export function buildPayload(
  state: PanelState,
  combPngB64: string,
  originalPngB64?: string,
): JobPayload {
  const normalized = normalizePanel(state);
  const payload: JobPayload = {
    kind: normalized.mode,
    comb_png_b64: combPngB64,
    s_sketch: normalized.sSketch,
    s_stroke: normalized.sStroke,
    s_realism: normalized.sRealism,
    seed: normalized.seed,
  };
  if (normalized.mode === "edit") {
    if (!originalPngB64) {
      throw new Error("edit mode requires an uploaded original image");
    }
    payload.original_png_b64 = originalPngB64;
  }
  return payload;
}
