/** Result gallery persisted locally: every entry carries the full request
 * (scales, seed, input image) so clicking it restores the panel exactly and
 * resubmission reproduces identical output bytes on the deterministic
 * server. */

import type { GalleryItem, JobPayload } from "./types.js";

const STORAGE_KEY = "diss-gallery-v1";
const MAX_ITEMS = 24;

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export class Gallery {
  private items: GalleryItem[] = [];

  constructor(private readonly storage: StorageLike) {
    const raw = storage.getItem(STORAGE_KEY);
    if (raw) {
      try {
        this.items = JSON.parse(raw) as GalleryItem[];
      } catch {
        this.items = [];
      }
    }
  }

  list(): readonly GalleryItem[] {
    return this.items;
  }

  append(thumbnailDataUrl: string, request: JobPayload): GalleryItem {
    const item: GalleryItem = {
      id: `g${Date.now().toString(36)}-${this.items.length}`,
      createdAt: Date.now(),
      thumbnailDataUrl,
      request: structuredClone(request),
    };
    this.items = [...this.items, item].slice(-MAX_ITEMS);
    this.persist();
    return item;
  }

  restore(id: string): GalleryItem | undefined {
    const item = this.items.find((entry) => entry.id === id);
    return item ? structuredClone(item) : undefined;
  }

  private persist(): void {
    this.storage.setItem(STORAGE_KEY, JSON.stringify(this.items));
  }
}
