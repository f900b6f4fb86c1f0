/** Typed client for the job service HTTP API, with status polling. */

import type { HealthInfo, JobPayload, JobRecord } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly field?: string,
  ) {
    super(message);
  }
}

export interface PollOptions {
  intervalMs?: number;
  backoffFactor?: number;
  maxIntervalMs?: number;
  maxAttempts?: number;
  onTick?: (record: JobRecord) => void;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.base}${path}`, init);
    } catch (err) {
      throw new ApiError(`network failure: ${String(err)}`, 0);
    }
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiError(
        (body as { error?: string }).error ?? `HTTP ${response.status}`,
        response.status,
        (body as { field?: string }).field,
      );
    }
    return body as T;
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/api/health");
  }

  submitJob(payload: JobPayload): Promise<{ id: string }> {
    return this.request<{ id: string }>("/api/jobs", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  getJob(id: string): Promise<JobRecord> {
    return this.request<JobRecord>(`/api/jobs/${id}`);
  }

  imageUrl(ref: string): string {
    return `${this.base}/api/images/${ref}`;
  }

  async fetchImageBytes(ref: string): Promise<ArrayBuffer> {
    const response = await this.fetchFn(this.imageUrl(ref));
    if (!response.ok) throw new ApiError(`image not found`, response.status);
    return response.arrayBuffer();
  }

  /** Poll at 1 s, backing off gently, until the job is done or failed. */
  async pollJob(id: string, options: PollOptions = {}): Promise<JobRecord> {
    const {
      intervalMs = 1000,
      backoffFactor = 1.5,
      maxIntervalMs = 5000,
      maxAttempts = 600,
      onTick,
      sleep = defaultSleep,
    } = options;
    let wait = intervalMs;
    for (let attempt = 0; attempt < maxAttempts; attempt++) {
      const record = await this.getJob(id);
      onTick?.(record);
      if (record.status === "done") return record;
      if (record.status === "failed") {
        throw new ApiError(record.error ?? "job failed", 200);
      }
      await sleep(wait);
      wait = Math.min(wait * backoffFactor, maxIntervalMs);
    }
    throw new ApiError("job polling timed out", 0);
  }
}
