/** Drawing surface: a sketch (pen) layer and a stroke (brush) layer over an
 * optional uploaded original, drawn at display scale and exported at model
 * resolution. Undo restores full layer snapshots, so the flattened export
 * after undo is byte-identical to the earlier state. */

import { exportDrawing, flattenLayers } from "./pixels.js";
import type { Raster } from "./types.js";

export type Tool = "pen" | "brush";

interface LayerSnapshot {
  sketch: ImageData;
  stroke: ImageData;
}

export class DrawingCanvas {
  readonly displaySize: number;
  readonly element: HTMLCanvasElement;
  private readonly sketchLayer: HTMLCanvasElement;
  private readonly strokeLayer: HTMLCanvasElement;
  private originalImage: HTMLImageElement | null = null;
  private undoStack: LayerSnapshot[] = [];
  private drawing = false;
  private lastPoint: [number, number] | null = null;

  tool: Tool = "pen";
  brushColor = "#d03a2b";
  brushSize = 14;
  penSize = 4;

  constructor(
    readonly modelSize: number,
    scale: number = Math.max(8, Math.floor(320 / modelSize)),
  ) {
    this.displaySize = modelSize * scale;
    this.element = this.makeCanvas();
    this.sketchLayer = this.makeCanvas();
    this.strokeLayer = this.makeCanvas();
    this.element.style.touchAction = "none";
    this.element.addEventListener("pointerdown", (e) => this.onDown(e));
    this.element.addEventListener("pointermove", (e) => this.onMove(e));
    this.element.addEventListener("pointerup", () => this.onUp());
    this.element.addEventListener("pointerleave", () => this.onUp());
    this.render();
  }

  private makeCanvas(): HTMLCanvasElement {
    const canvas = document.createElement("canvas");
    canvas.width = this.displaySize;
    canvas.height = this.displaySize;
    return canvas;
  }

  private ctx(canvas: HTMLCanvasElement): CanvasRenderingContext2D {
    return canvas.getContext("2d", { willReadFrequently: true })!;
  }

  setOriginal(image: HTMLImageElement | null): void {
    this.originalImage = image;
    this.render();
  }

  hasOriginal(): boolean {
    return this.originalImage !== null;
  }

  private snapshot(): void {
    this.undoStack.push({
      sketch: this.ctx(this.sketchLayer).getImageData(0, 0, this.displaySize, this.displaySize),
      stroke: this.ctx(this.strokeLayer).getImageData(0, 0, this.displaySize, this.displaySize),
    });
    if (this.undoStack.length > 50) this.undoStack.shift();
  }

  undo(): void {
    const snapshot = this.undoStack.pop();
    if (!snapshot) return;
    this.ctx(this.sketchLayer).putImageData(snapshot.sketch, 0, 0);
    this.ctx(this.strokeLayer).putImageData(snapshot.stroke, 0, 0);
    this.render();
  }

  clear(): void {
    this.snapshot();
    this.ctx(this.sketchLayer).clearRect(0, 0, this.displaySize, this.displaySize);
    this.ctx(this.strokeLayer).clearRect(0, 0, this.displaySize, this.displaySize);
    this.render();
  }

  private canvasPoint(event: PointerEvent): [number, number] {
    const rect = this.element.getBoundingClientRect();
    return [
      ((event.clientX - rect.left) / rect.width) * this.displaySize,
      ((event.clientY - rect.top) / rect.height) * this.displaySize,
    ];
  }

  private onDown(event: PointerEvent): void {
    this.snapshot();
    this.drawing = true;
    this.lastPoint = this.canvasPoint(event);
    this.strokeTo(this.lastPoint);
  }

  private onMove(event: PointerEvent): void {
    if (!this.drawing) return;
    this.strokeTo(this.canvasPoint(event));
  }

  private onUp(): void {
    this.drawing = false;
    this.lastPoint = null;
  }

  private strokeTo(point: [number, number]): void {
    const layer = this.tool === "pen" ? this.sketchLayer : this.strokeLayer;
    const ctx = this.ctx(layer);
    ctx.lineCap = "round";
    ctx.lineJoin = "round";
    ctx.strokeStyle = this.tool === "pen" ? "#000000" : this.brushColor;
    ctx.lineWidth = this.tool === "pen" ? this.penSize : this.brushSize;
    ctx.beginPath();
    const from = this.lastPoint ?? point;
    ctx.moveTo(from[0], from[1]);
    ctx.lineTo(point[0], point[1]);
    ctx.stroke();
    this.lastPoint = point;
    this.render();
  }

  private render(): void {
    const ctx = this.ctx(this.element);
    ctx.fillStyle = "#ffffff";
    ctx.fillRect(0, 0, this.displaySize, this.displaySize);
    if (this.originalImage) {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(this.originalImage, 0, 0, this.displaySize, this.displaySize);
    }
    ctx.drawImage(this.strokeLayer, 0, 0);
    ctx.drawImage(this.sketchLayer, 0, 0);
  }

  private layerRaster(canvas: HTMLCanvasElement): Raster {
    const data = this.ctx(canvas).getImageData(0, 0, this.displaySize, this.displaySize);
    return { width: data.width, height: data.height, data: data.data };
  }

  isEmpty(): boolean {
    const layers = [this.layerRaster(this.sketchLayer), this.layerRaster(this.strokeLayer)];
    return layers.every((raster) => {
      for (let i = 3; i < raster.data.length; i += 4) {
        if (raster.data[i] > 0) return false;
      }
      return true;
    });
  }

  /** Flattened drawing at model resolution, as a canvas ready to encode. */
  exportModelCanvas(): HTMLCanvasElement {
    const raster = exportDrawing(
      this.layerRaster(this.sketchLayer),
      this.layerRaster(this.strokeLayer),
      this.modelSize,
    );
    const out = document.createElement("canvas");
    out.width = this.modelSize;
    out.height = this.modelSize;
    const copy = new Uint8ClampedArray(raster.data) as Uint8ClampedArray<ArrayBuffer>;
    out
      .getContext("2d")!
      .putImageData(new ImageData(copy, raster.width, raster.height), 0, 0);
    return out;
  }

  exportPngBase64(): string {
    return this.exportModelCanvas().toDataURL("image/png").split(",")[1];
  }

  /** Display-scale flattened preview (used for gallery thumbnails). */
  flattenPreview(): Raster {
    return flattenLayers(
      this.layerRaster(this.sketchLayer),
      this.layerRaster(this.strokeLayer),
    );
  }

  exportOriginalPngBase64(): string | null {
    if (!this.originalImage) return null;
    const out = document.createElement("canvas");
    out.width = this.modelSize;
    out.height = this.modelSize;
    const ctx = out.getContext("2d")!;
    ctx.drawImage(this.originalImage, 0, 0, this.modelSize, this.modelSize);
    return out.toDataURL("image/png").split(",")[1];
  }
}
