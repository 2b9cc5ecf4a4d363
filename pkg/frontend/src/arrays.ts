/**
 * Binary array payloads: base64-encoded little-endian buffers with an
 * explicit dtype string and shape, matching the service wire format.
 */

export interface ArrayPayload {
  data_b64: string;
  dtype: string;
  shape: number[];
}

export type WireArray = Float32Array | Float64Array | Int32Array | BigInt64Array | Uint8Array;

const CTORS: Record<string, (buf: ArrayBuffer) => WireArray> = {
  '<f4': (b) => new Float32Array(b),
  '<f8': (b) => new Float64Array(b),
  '<i4': (b) => new Int32Array(b),
  '<i8': (b) => new BigInt64Array(b),
  '|b1': (b) => new Uint8Array(b),
};

export function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function decodePayload(payload: ArrayPayload): WireArray {
  const ctor = CTORS[payload.dtype];
  if (!ctor) {
    throw new Error(`unsupported dtype ${payload.dtype}`);
  }
  const raw = Buffer.from(payload.data_b64, 'base64');
  // copy into a fresh buffer so byteOffset is 0 and length is exact
  const buf = raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength);
  const arr = ctor(buf);
  if (arr.length !== numel(payload.shape)) {
    throw new Error(`payload has ${arr.length} elements, shape says ${numel(payload.shape)}`);
  }
  return arr;
}

export function encodeFloat32(data: Float32Array, shape: number[]): ArrayPayload {
  checkShape(data.length, shape);
  return {
    data_b64: Buffer.from(data.buffer, data.byteOffset, data.byteLength).toString('base64'),
    dtype: '<f4',
    shape,
  };
}

export function encodeInt32(data: Int32Array, shape: number[]): ArrayPayload {
  checkShape(data.length, shape);
  return {
    data_b64: Buffer.from(data.buffer, data.byteOffset, data.byteLength).toString('base64'),
    dtype: '<i4',
    shape,
  };
}

function checkShape(length: number, shape: number[]): void {
  if (length !== numel(shape)) {
    throw new Error(`array has ${length} elements but shape implies ${numel(shape)}`);
  }
}
