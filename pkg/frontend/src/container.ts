/**
 * Reader for actcodec's versioned binary container (checkpoints, code
 * records, chunk records): an 8-byte magic, a little-endian u32 header
 * length, a JSON header carrying metadata and an array manifest, then the
 * raw little-endian array payload.
 */

import { readFileSync } from 'node:fs';

import { WireArray } from './arrays.js';

const MAGIC = Buffer.from('ACODEC\x00\x01', 'latin1');
const SUPPORTED_VERSION = 1;

interface ManifestEntry {
  name: string;
  dtype: string;
  shape: number[];
  offset: number;
}

export interface Container {
  meta: Record<string, unknown>;
  arrays: Map<string, { data: WireArray; shape: number[] }>;
}

function elementSize(dtype: string): number {
  switch (dtype) {
    case '<f4':
    case '<i4':
      return 4;
    case '<f8':
    case '<i8':
      return 8;
    case '|b1':
      return 1;
    default:
      throw new Error(`unsupported dtype ${dtype}`);
  }
}

function viewArray(buf: Buffer, dtype: string, count: number): WireArray {
  const copy = buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength);
  switch (dtype) {
    case '<f4':
      return new Float32Array(copy, 0, count);
    case '<f8':
      return new Float64Array(copy, 0, count);
    case '<i4':
      return new Int32Array(copy, 0, count);
    case '<i8':
      return new BigInt64Array(copy, 0, count);
    case '|b1':
      return new Uint8Array(copy, 0, count);
    default:
      throw new Error(`unsupported dtype ${dtype}`);
  }
}

const TRAJ_MAGIC = Buffer.from('ACTTRAJ1', 'latin1');

export interface Trajectory {
  values: Float32Array; // row-major (horizon, dims)
  horizon: number;
  dims: number;
  frequencyHz: number;
  labels: string[];
}

/** Reader for the record-per-trajectory container written by the CLI. */
export function readTrajectories(path: string): Trajectory[] {
  const data = readFileSync(path);
  if (!data.subarray(0, 8).equals(TRAJ_MAGIC)) {
    throw new Error(`${path}: not a trajectory container`);
  }
  const out: Trajectory[] = [];
  let offset = 8;
  while (offset < data.length) {
    const dims = data.readUInt32LE(offset);
    const horizon = data.readUInt32LE(offset + 4);
    const frequencyHz = data.readDoubleLE(offset + 8);
    const labelLen = data.readUInt32LE(offset + 16);
    offset += 20;
    const labels = data.subarray(offset, offset + labelLen).toString('utf-8').split('\n');
    offset += labelLen;
    const nbytes = horizon * dims * 4;
    const slice = data.subarray(offset, offset + nbytes);
    const values = new Float32Array(
      slice.buffer.slice(slice.byteOffset, slice.byteOffset + nbytes));
    offset += nbytes;
    out.push({ values, horizon, dims, frequencyHz, labels });
  }
  return out;
}

export function readContainer(path: string): Container {
  const data = readFileSync(path);
  if (data.length < 12 || !data.subarray(0, 8).equals(MAGIC)) {
    throw new Error(`${path}: not an actcodec container`);
  }
  const headerLen = data.readUInt32LE(8);
  const header = JSON.parse(data.subarray(12, 12 + headerLen).toString('utf-8'));
  if (header.version !== SUPPORTED_VERSION) {
    throw new Error(`${path}: unsupported container version ${header.version}`);
  }
  const base = 12 + headerLen;
  const arrays = new Map<string, { data: WireArray; shape: number[] }>();
  for (const entry of header.arrays as ManifestEntry[]) {
    const count = entry.shape.reduce((a: number, b: number) => a * b, 1);
    const nbytes = count * elementSize(entry.dtype);
    const slice = data.subarray(base + entry.offset, base + entry.offset + nbytes);
    arrays.set(entry.name, { data: viewArray(slice, entry.dtype, count), shape: entry.shape });
  }
  return { meta: header.meta, arrays };
}
