/**
 * HTTP client for the actcodec inference service.
 *
 * Chunks go in as Float32Array batches, codes come back as Int32Array, and
 * every value is bit-identical to what the CLI produces on the same input,
 * because the service runs the same frozen codec.
 */

import { ArrayPayload, decodePayload, encodeFloat32, encodeInt32 } from './arrays.js';

export interface CodecInfo {
  handle: string;
  horizon: number;
  dims: number;
  n_stages: number;
  c_h: number;
  c_a: number;
  codebook_size: number;
  n_tokens: number;
}

export interface EncodedBatch {
  codes: Int32Array;
  shape: number[];
}

export interface DecodedBatch {
  chunks: Float32Array;
  shape: number[];
}

export class ActcodecError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
    this.name = 'ActcodecError';
  }
}

export class ActcodecClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { 'content-type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const parsed = (await res.json()) as { detail?: string };
        if (parsed.detail) detail = String(parsed.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ActcodecError(`${method} ${path}: ${detail}`, res.status);
    }
    return (await res.json()) as T;
  }

  async health(): Promise<{ status: string; version: string; codecs: number }> {
    return this.request('GET', '/health');
  }

  /** Load a checkpoint on the server; the returned handle addresses it. */
  async load(checkpointPath: string): Promise<CodecInfo> {
    return this.request('POST', '/codecs', { path: checkpointPath });
  }

  async info(handle: string): Promise<CodecInfo> {
    return this.request('GET', `/codecs/${handle}`);
  }

  /** chunks: (n, H, D) float32 values flattened row-major. */
  async encode(handle: string, chunks: Float32Array, shape: number[]): Promise<EncodedBatch> {
    const res = await this.request<{ codes: ArrayPayload }>(
      'POST', `/codecs/${handle}/encode`, { chunks: encodeFloat32(chunks, shape) });
    return { codes: decodePayload(res.codes) as Int32Array, shape: res.codes.shape };
  }

  /** codes: (n, N_c, C_h, C_a) int32 indices flattened row-major. */
  async decode(handle: string, codes: Int32Array, shape: number[]): Promise<DecodedBatch> {
    const res = await this.request<{ chunks: ArrayPayload }>(
      'POST', `/codecs/${handle}/decode`, { codes: encodeInt32(codes, shape) });
    return { chunks: decodePayload(res.chunks) as Float32Array, shape: res.chunks.shape };
  }

  /** Round-trip valid-reconstruction rate of the codec on the given chunks. */
  async vrr(handle: string, chunks: Float32Array, shape: number[], sigma: number,
            perScalar = false): Promise<number> {
    const res = await this.request<{ vrr: number }>(
      'POST', `/codecs/${handle}/vrr`,
      { chunks: encodeFloat32(chunks, shape), sigma, per_scalar: perScalar });
    return res.vrr;
  }
}
