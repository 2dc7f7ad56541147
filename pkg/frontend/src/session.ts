import { ApiClient, GenerateOptions } from './api';
import { BoxDraft, draftToBox, sizeFilterWarnings } from './geometry';
import { Box, HistoryEntry, ImageInfo, Point, SizeFilter } from './types';

/**
 * Single-user studio session: current image, in-progress drag, append-only
 * history of generation results. At most one request is in flight; submit
 * is rejected while pending so history ordering stays deterministic.
 */
export class StudioSession {
  private image: ImageInfo | null = null;
  private draft: BoxDraft | null = null;
  private entries: HistoryEntry[] = [];
  private pending = false;
  displayScale = 1;

  constructor(
    private readonly api: ApiClient,
    private readonly sizeFilter: SizeFilter,
  ) {}

  get currentImage(): ImageInfo | null {
    return this.image;
  }

  get isPending(): boolean {
    return this.pending;
  }

  /** Append-only view of past generations. */
  get history(): readonly HistoryEntry[] {
    return this.entries;
  }

  selectImage(image: ImageInfo): void {
    this.image = image;
    this.draft = null;
  }

  beginDrag(point: Point): void {
    if (!this.image) throw new Error('no image selected');
    this.draft = { anchor: point, current: point };
  }

  moveDrag(point: Point): void {
    if (!this.draft) return;
    this.draft = { ...this.draft, current: point };
  }

  /** The normalized draft box in image pixels, or null before/without a drag. */
  get draftBox(): Box | null {
    if (!this.draft || !this.image) return null;
    return draftToBox(this.draft, this.displayScale, this.image.width, this.image.height);
  }

  /** Warnings for the current draft against the fetched size filter. */
  get draftWarnings(): string[] {
    const box = this.draftBox;
    return box ? sizeFilterWarnings(box, this.sizeFilter) : [];
  }

  async submit(options: GenerateOptions = {}): Promise<HistoryEntry> {
    if (!this.image) throw new Error('no image selected');
    const box = this.draftBox;
    if (!box) throw new Error('no box drawn');
    if (this.pending) throw new Error('a generation request is already in flight');
    this.pending = true;
    try {
      const result = await this.api.generate(this.image.id, box, options);
      const entry: HistoryEntry = Object.freeze({
        box: Object.freeze({ ...box }),
        manifest: result.manifest,
        composedPng: result.composedPng,
        grayPng: result.grayPng,
        colorPng: result.colorPng,
      });
      this.entries = [...this.entries, entry];
      return entry;
    } finally {
      this.pending = false;
    }
  }

  /** Entries selected for the side-by-side compare view, in index order. */
  compare(indices: number[]): HistoryEntry[] {
    return indices.map((i) => {
      const entry = this.entries[i];
      if (!entry) throw new Error(`no history entry at index ${i}`);
      return entry;
    });
  }

  clearHistory(): void {
    this.entries = [];
  }
}
