import { Box, GenerationResult, HealthInfo, ImageInfo, Manifest } from './types';
import { parseMultipart } from './multipart';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface GenerateOptions {
  alphaBand?: number;
  seed?: number;
  overrideSizeFilter?: boolean;
  stages?: boolean;
}

/** Error carrying the invariant named by the service in a 422 response. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = 'ServiceError';
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async health(): Promise<HealthInfo> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/health`);
    if (!res.ok) throw new ServiceError(res.status, await res.text());
    return (await res.json()) as HealthInfo;
  }

  async listImages(): Promise<ImageInfo[]> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/images`);
    if (!res.ok) throw new ServiceError(res.status, await res.text());
    return (await res.json()) as ImageInfo[];
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/api/images/${encodeURIComponent(imageId)}`;
  }

  async generate(imageId: string, box: Box, options: GenerateOptions = {}): Promise<GenerationResult> {
    const query = options.stages ? '?stages=1' : '';
    const payload: Record<string, unknown> = { image_id: imageId, box };
    if (options.alphaBand !== undefined) payload.alpha_band = options.alphaBand;
    if (options.seed !== undefined) payload.seed = options.seed;
    if (options.overrideSizeFilter) payload.override_size_filter = true;
    const res = await this.fetchImpl(`${this.baseUrl}/api/generate${query}`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(payload),
    });
    if (!res.ok) {
      let detail = await res.text();
      try {
        const parsed = JSON.parse(detail) as { detail?: string };
        if (parsed.detail) detail = parsed.detail;
      } catch {
        // plain-text error body
      }
      throw new ServiceError(res.status, detail);
    }
    const contentType = res.headers.get('content-type') ?? '';
    const body = new Uint8Array(await res.arrayBuffer());
    const parts = parseMultipart(body, contentType);
    const manifestPart = parts.get('manifest');
    const composedPart = parts.get('composed');
    if (!manifestPart || !composedPart) {
      throw new Error('generation response missing manifest or composed part');
    }
    const manifest = JSON.parse(new TextDecoder().decode(manifestPart.payload)) as Manifest;
    return {
      manifest,
      composedPng: composedPart.payload,
      grayPng: parts.get('gray')?.payload,
      colorPng: parts.get('color')?.payload,
    };
  }
}
