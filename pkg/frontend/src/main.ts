import { ApiClient, ApiError } from "./api.js";
import { DrawingCanvas, type Tool } from "./canvas.js";
import { Gallery } from "./gallery.js";
import {
  SLIDERS,
  buildPayload,
  canSubmit,
  clampToSlider,
  defaultPanelState,
  type PanelState,
} from "./panel.js";
import type { JobKind } from "./types.js";

const BRUSH_COLORS = [
  "#d03a2b", "#e8893a", "#e3c43b", "#4a9f4a",
  "#3a7bd0", "#845ec2", "#7a4a2b", "#222222",
];

const api = new ApiClient("");
const state: PanelState = defaultPanelState();

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

async function init(): Promise<void> {
  const root = document.getElementById("app")!;
  root.textContent = "";

  let health;
  try {
    health = await api.health();
  } catch (err) {
    root.append(el("div", "banner error", `Cannot reach the service: ${String(err)}`));
    const retry = el("button", "", "Retry");
    retry.addEventListener("click", () => void init());
    root.append(retry);
    return;
  }
  if (health.status !== "ok" || !health.model_size) {
    root.append(el("div", "banner error", "Service is degraded (no checkpoint loaded)."));
    return;
  }

  const modelSize = health.model_size;
  const canvas = new DrawingCanvas(modelSize);
  const gallery = new Gallery(window.localStorage);

  const layout = el("div", "layout");
  const left = el("div", "column");
  const right = el("div", "column");
  root.append(layout);
  layout.append(left, right);

  left.append(el("h1", "", "Sketch & Stroke Studio"));
  left.append(
    el("p", "hint", `Draw outlines with the pen and colors with the brush (${modelSize}x${modelSize} model).`),
  );
  canvas.element.className = "drawing";
  left.append(canvas.element);

  // tool row
  const tools = el("div", "row");
  const penBtn = el("button", "tool active", "Pen");
  const brushBtn = el("button", "tool", "Brush");
  const undoBtn = el("button", "", "Undo");
  const clearBtn = el("button", "", "Clear");
  tools.append(penBtn, brushBtn, undoBtn, clearBtn);
  left.append(tools);

  const setTool = (tool: Tool) => {
    canvas.tool = tool;
    penBtn.classList.toggle("active", tool === "pen");
    brushBtn.classList.toggle("active", tool === "brush");
  };
  penBtn.addEventListener("click", () => setTool("pen"));
  brushBtn.addEventListener("click", () => setTool("brush"));
  undoBtn.addEventListener("click", () => canvas.undo());
  clearBtn.addEventListener("click", () => canvas.clear());

  // brush palette and size
  const palette = el("div", "row");
  for (const color of BRUSH_COLORS) {
    const swatch = el("button", "swatch");
    swatch.style.background = color;
    swatch.addEventListener("click", () => {
      canvas.brushColor = color;
      setTool("brush");
    });
    palette.append(swatch);
  }
  const sizeInput = el("input") as HTMLInputElement;
  sizeInput.type = "range";
  sizeInput.min = "4";
  sizeInput.max = "40";
  sizeInput.value = String(canvas.brushSize);
  sizeInput.addEventListener("input", () => {
    canvas.brushSize = Number(sizeInput.value);
  });
  palette.append(sizeInput);
  left.append(palette);

  // original upload for edit mode
  const uploadRow = el("div", "row");
  const upload = el("input") as HTMLInputElement;
  upload.type = "file";
  upload.accept = "image/png,image/jpeg";
  upload.addEventListener("change", () => {
    const file = upload.files?.[0];
    if (!file) return;
    const image = new Image();
    image.onload = () => {
      canvas.setOriginal(image);
      state.hasOriginal = true;
      refreshControls();
    };
    image.src = URL.createObjectURL(file);
  });
  uploadRow.append(el("span", "hint", "Original (edit mode): "), upload);
  left.append(uploadRow);

  // control panel
  right.append(el("h2", "", "Controls"));
  const sliderValues: Record<string, HTMLElement> = {};

  function addSlider(
    label: string,
    key: "s_sketch" | "s_stroke" | "s_realism",
    get: () => number,
    set: (v: number) => void,
  ): void {
    const spec = SLIDERS[key];
    const row = el("div", "slider-row");
    const input = el("input") as HTMLInputElement;
    input.type = "range";
    input.min = String(spec.min);
    input.max = String(spec.max);
    input.step = String(spec.step);
    input.value = String(get());
    const value = el("span", "value", String(get()));
    sliderValues[key] = value;
    input.addEventListener("input", () => {
      set(clampToSlider(Number(input.value), spec));
      value.textContent = get().toFixed(2);
      refreshControls();
    });
    row.append(el("label", "", label), input, value);
    right.append(row);
  }

  addSlider("Sketch faithfulness", "s_sketch", () => state.sSketch, (v) => (state.sSketch = v));
  addSlider("Stroke faithfulness", "s_stroke", () => state.sStroke, (v) => (state.sStroke = v));
  addSlider("Realism", "s_realism", () => state.sRealism, (v) => (state.sRealism = v));

  const modeRow = el("div", "row");
  modeRow.append(el("label", "", "Mode"));
  const modeSelect = el("select") as HTMLSelectElement;
  for (const kind of ["generate", "edit", "fill"] as JobKind[]) {
    const option = el("option", "", kind) as HTMLOptionElement;
    option.value = kind;
    modeSelect.append(option);
  }
  modeSelect.addEventListener("change", () => {
    state.mode = modeSelect.value as JobKind;
    refreshControls();
  });
  modeRow.append(modeSelect);
  right.append(modeRow);

  const seedRow = el("div", "row");
  seedRow.append(el("label", "", "Seed"));
  const seedInput = el("input") as HTMLInputElement;
  seedInput.type = "number";
  seedInput.value = "0";
  seedInput.addEventListener("input", () => {
    state.seed = Math.trunc(Number(seedInput.value) || 0);
  });
  seedRow.append(seedInput);
  right.append(seedRow);

  const generateBtn = el("button", "generate", "Generate");
  right.append(generateBtn);
  const status = el("div", "status");
  right.append(status);
  const resultImg = el("img", "result") as HTMLImageElement;
  resultImg.alt = "generation result";
  right.append(resultImg);

  right.append(el("h2", "", "Gallery"));
  const galleryStrip = el("div", "gallery");
  right.append(galleryStrip);

  function refreshControls(): void {
    generateBtn.disabled = !canSubmit(state);
    generateBtn.textContent = state.jobRunning ? "Working..." : "Generate";
  }

  function renderGallery(): void {
    galleryStrip.textContent = "";
    for (const item of [...gallery.list()].reverse()) {
      const thumb = el("img", "thumb") as HTMLImageElement;
      thumb.src = item.thumbnailDataUrl;
      thumb.title = `seed ${item.request.seed}, sketch ${item.request.s_sketch}, stroke ${item.request.s_stroke}, realism ${item.request.s_realism}`;
      thumb.addEventListener("click", () => {
        const restored = gallery.restore(item.id);
        if (!restored) return;
        state.sSketch = restored.request.s_sketch;
        state.sStroke = restored.request.s_stroke;
        state.sRealism = restored.request.s_realism;
        state.seed = restored.request.seed;
        state.mode = restored.request.kind;
        modeSelect.value = restored.request.kind;
        seedInput.value = String(restored.request.seed);
        for (const [key, getter] of [
          ["s_sketch", () => state.sSketch],
          ["s_stroke", () => state.sStroke],
          ["s_realism", () => state.sRealism],
        ] as const) {
          sliderValues[key].textContent = getter().toFixed(2);
        }
        const inputs = right.querySelectorAll<HTMLInputElement>(".slider-row input");
        inputs[0].value = String(state.sSketch);
        inputs[1].value = String(state.sStroke);
        inputs[2].value = String(state.sRealism);
        void runJob(restored.request);
      });
      galleryStrip.append(thumb);
    }
  }

  async function runJob(payload: ReturnType<typeof buildPayload>): Promise<void> {
    state.jobRunning = true;
    refreshControls();
    status.textContent = "submitting...";
    status.className = "status";
    try {
      const { id } = await api.submitJob(payload);
      const record = await api.pollJob(id, {
        onTick: (r) => (status.textContent = `job ${id.slice(0, 8)}: ${r.status}`),
      });
      resultImg.src = `${api.imageUrl(record.output_ref!)}?t=${Date.now()}`;
      status.textContent = "done";
      const thumbnail = canvas.exportModelCanvas().toDataURL("image/png");
      gallery.append(thumbnail, payload);
      renderGallery();
    } catch (err) {
      status.className = "status error";
      if (err instanceof ApiError && err.field) {
        status.textContent = `rejected: ${err.message}`;
      } else if (err instanceof ApiError && err.status === 0) {
        status.textContent = `network failure, please retry: ${err.message}`;
      } else {
        status.textContent = `failed: ${String(err)}`;
      }
    } finally {
      state.jobRunning = false;
      refreshControls();
    }
  }

  generateBtn.addEventListener("click", () => {
    if (!canSubmit(state)) return;
    if (canvas.isEmpty()) {
      status.textContent = "canvas is empty; submitting a blank drawing";
    }
    const payload = buildPayload(
      state,
      canvas.exportPngBase64(),
      canvas.exportOriginalPngBase64() ?? undefined,
    );
    void runJob(payload);
  });

  refreshControls();
  renderGallery();
}

void init();
