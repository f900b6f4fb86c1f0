export type JobKind = "generate" | "edit" | "fill";
export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobPayload {
  kind: JobKind;
  comb_png_b64: string;
  original_png_b64?: string;
  s_sketch: number;
  s_stroke: number;
  s_realism: number;
  seed: number;
  refine_cutoff_R?: number;
}

export interface JobRecord {
  id: string;
  kind: JobKind;
  status: JobStatus;
  output_ref: string | null;
  error: string | null;
}

export interface HealthInfo {
  status: "ok" | "degraded";
  model_size: number | null;
  checkpoint_hash: string | null;
  queue_depth: number;
  worker_count: number;
}

/** RGBA pixel buffer decoupled from the DOM so logic is testable in node. */
export interface Raster {
  width: number;
  height: number;
  data: Uint8ClampedArray;
}

export interface GalleryItem {
  id: string;
  createdAt: number;
  thumbnailDataUrl: string;
  request: JobPayload;
}
