import { describe, expect, it } from "vitest";

import {
  SLIDERS,
  buildPayload,
  canSubmit,
  clampToSlider,
  defaultPanelState,
} from "../src/panel.js";

describe("clampToSlider", () => {
  it("clamps out-of-range values to the ends", () => {
    expect(clampToSlider(5.2, SLIDERS.s_sketch)).toBe(4);
    expect(clampToSlider(-1, SLIDERS.s_sketch)).toBe(0);
    expect(clampToSlider(1.5, SLIDERS.s_realism)).toBe(1);
  });

  it("quantizes to the slider step", () => {
    expect(clampToSlider(1.234, SLIDERS.s_sketch)).toBeCloseTo(1.2, 10);
    expect(clampToSlider(0.976, SLIDERS.s_realism)).toBeCloseTo(1.0, 10);
    expect(clampToSlider(0.52, SLIDERS.s_realism)).toBeCloseTo(0.5, 10);
  });

  it("replaces non-finite values with the default", () => {
    expect(clampToSlider(Number.NaN, SLIDERS.s_stroke)).toBe(SLIDERS.s_stroke.default);
    expect(clampToSlider(Infinity, SLIDERS.s_stroke)).toBe(SLIDERS.s_stroke.default);
  });

  it("never emits an out-of-range value for any input", () => {
    for (const spec of Object.values(SLIDERS)) {
      for (let i = 0; i < 500; i++) {
        const wild = (Math.random() - 0.3) * 20;
        const clamped = clampToSlider(wild, spec);
        expect(clamped).toBeGreaterThanOrEqual(spec.min);
        expect(clamped).toBeLessThanOrEqual(spec.max);
      }
    }
  });
});

describe("canSubmit", () => {
  it("allows the default state", () => {
    expect(canSubmit(defaultPanelState())).toBe(true);
  });

  it("blocks while a job is running", () => {
    expect(canSubmit({ ...defaultPanelState(), jobRunning: true })).toBe(false);
  });

  it("blocks out-of-range slider values", () => {
    expect(canSubmit({ ...defaultPanelState(), sSketch: 9 })).toBe(false);
    expect(canSubmit({ ...defaultPanelState(), sRealism: -0.2 })).toBe(false);
  });

  it("blocks edit mode without an uploaded original", () => {
    expect(canSubmit({ ...defaultPanelState(), mode: "edit" })).toBe(false);
    expect(
      canSubmit({ ...defaultPanelState(), mode: "edit", hasOriginal: true }),
    ).toBe(true);
  });
});

describe("buildPayload", () => {
  it("carries panel values through", () => {
    const payload = buildPayload(
      { ...defaultPanelState(), sSketch: 1.5, sStroke: 2.5, sRealism: 0.4, seed: 77 },
      "QUJD",
    );
    expect(payload).toMatchObject({
      kind: "generate",
      comb_png_b64: "QUJD",
      s_sketch: 1.5,
      s_stroke: 2.5,
      s_realism: 0.4,
      seed: 77,
    });
    expect(payload.original_png_b64).toBeUndefined();
  });

  it("clamps anything out of range before building", () => {
    const payload = buildPayload(
      { ...defaultPanelState(), sSketch: 99, sRealism: -3 },
      "QUJD",
    );
    expect(payload.s_sketch).toBe(4);
    expect(payload.s_realism).toBe(0);
  });

  it("edit mode includes the original and requires it", () => {
    const state = { ...defaultPanelState(), mode: "edit" as const, hasOriginal: true };
    expect(() => buildPayload(state, "QUJD")).toThrow(/original/);
    const payload = buildPayload(state, "QUJD", "T1JJRw==");
    expect(payload.original_png_b64).toBe("T1JJRw==");
  });

  it("truncates fractional seeds", () => {
    const payload = buildPayload({ ...defaultPanelState(), seed: 3.9 }, "QUJD");
    expect(payload.seed).toBe(3);
  });
});
