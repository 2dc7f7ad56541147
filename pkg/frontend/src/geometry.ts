import { Box, Point, SizeFilter } from './types';

/**
 * A rectangle being dragged out on the canvas. Anchor is where the pointer
 * went down, current follows the pointer; both are in display coordinates.
 */
export interface BoxDraft {
  anchor: Point;
  current: Point;
}

/** Map a display-space coordinate to an image-pixel coordinate. */
export function displayToImage(v: number, scale: number): number {
  return Math.round(v / scale);
}

/** Map an image-pixel coordinate to display space. */
export function imageToDisplay(v: number, scale: number): number {
  return v * scale;
}

/**
 * Normalize a drag into a positive-size box in image pixels, clipped to the
 * image bounds. Returns null when the drag degenerates to an empty box.
 */
export function draftToBox(
  draft: BoxDraft,
  scale: number,
  imageWidth: number,
  imageHeight: number,
): Box | null {
  const x1 = displayToImage(Math.min(draft.anchor.x, draft.current.x), scale);
  const y1 = displayToImage(Math.min(draft.anchor.y, draft.current.y), scale);
  const x2 = displayToImage(Math.max(draft.anchor.x, draft.current.x), scale);
  const y2 = displayToImage(Math.max(draft.anchor.y, draft.current.y), scale);
  const cx1 = Math.max(0, Math.min(x1, imageWidth));
  const cy1 = Math.max(0, Math.min(y1, imageHeight));
  const cx2 = Math.max(0, Math.min(x2, imageWidth));
  const cy2 = Math.max(0, Math.min(y2, imageHeight));
  const w = cx2 - cx1;
  const h = cy2 - cy1;
  if (w <= 0 || h <= 0) return null;
  return { x: cx1, y: cy1, w, h };
}

/** Display-space rectangle for rendering a box overlay. */
export function boxToDisplayRect(
  box: Box,
  scale: number,
): { x: number; y: number; w: number; h: number } {
  return {
    x: imageToDisplay(box.x, scale),
    y: imageToDisplay(box.y, scale),
    w: imageToDisplay(box.w, scale),
    h: imageToDisplay(box.h, scale),
  };
}

/**
 * Human-readable warnings for a box that violates the size filter fetched
 * from the service. Empty array means the box is submittable without
 * override.
 */
export function sizeFilterWarnings(box: Box, filter: SizeFilter): string[] {
  const warnings: string[] = [];
  if (box.w < filter.min) {
    warnings.push(`box width ${box.w} is below the minimum ${filter.min}`);
  }
  if (box.h < filter.min) {
    warnings.push(`box height ${box.h} is below the minimum ${filter.min}`);
  }
  if (box.w > filter.max_w) {
    warnings.push(`box width ${box.w} exceeds the maximum ${filter.max_w}`);
  }
  if (box.h > filter.max_h) {
    warnings.push(`box height ${box.h} exceeds the maximum ${filter.max_h}`);
  }
  return warnings;
}

export function boxesEqual(a: Box, b: Box): boolean {
  return a.x === b.x && a.y === b.y && a.w === b.w && a.h === b.h;
}
