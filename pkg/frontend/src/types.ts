export interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface Point {
  x: number;
  y: number;
}

export interface SizeFilter {
  min: number;
  max_w: number;
  max_h: number;
}

export interface HealthInfo {
  version: string;
  checkpoint: string;
  size_filter: SizeFilter;
  requests: number;
}

export interface ImageInfo {
  id: string;
  height: number;
  width: number;
}

export interface Manifest {
  box: Box;
  seed: number;
  alpha_band: number;
  checkpoint: string;
  image_dims: { height: number; width: number };
}

export interface GenerationResult {
  manifest: Manifest;
  composedPng: Uint8Array;
  grayPng?: Uint8Array;
  colorPng?: Uint8Array;
}

export interface HistoryEntry {
  readonly box: Box;
  readonly manifest: Manifest;
  readonly composedPng: Uint8Array;
  readonly grayPng?: Uint8Array;
  readonly colorPng?: Uint8Array;
}
