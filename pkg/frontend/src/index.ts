export { ActcodecClient, ActcodecError } from './client.js';
export type { CodecInfo, EncodedBatch, DecodedBatch } from './client.js';
export { decodePayload, encodeFloat32, encodeInt32 } from './arrays.js';
export type { ArrayPayload, WireArray } from './arrays.js';
export { readContainer } from './container.js';
export type { Container } from './container.js';
