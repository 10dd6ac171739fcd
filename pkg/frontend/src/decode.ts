/** Payload decoding: base64 raw buffers and run-length masks. */

import type { ImageSlicePayload, MaskPayload } from './types.js';

export function b64ToBytes(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export function decodeMask(payload: MaskPayload): Uint8Array {
  const size = payload.shape.reduce((a, b) => a * b, 1);
  if (payload.encoding === 'raw') {
    const bytes = b64ToBytes(payload.data_b64 ?? '');
    if (bytes.length !== size) throw new Error(`raw mask is ${bytes.length} bytes, expected ${size}`);
    return bytes;
  }
  const runs = payload.rle ?? [];
  if (runs.length % 2 !== 0) throw new Error('run-length payload must have even length');
  const out = new Uint8Array(size);
  let at = 0;
  for (let i = 0; i < runs.length; i += 2) {
    const value = runs[i];
    const count = runs[i + 1];
    out.fill(value, at, at + count);
    at += count;
  }
  if (at !== size) throw new Error(`run-length decodes to ${at} values, expected ${size}`);
  return out;
}

export function decodeImageSlice(payload: ImageSlicePayload): Float32Array {
  const bytes = b64ToBytes(payload.data_b64);
  return new Float32Array(bytes.buffer, bytes.byteOffset, bytes.length / 4);
}
