/** Pure pixel-buffer rendering: grayscale slice, mask overlay, prompt glyphs.
 *
 * Everything here returns plain RGBA buffers so it is testable without a
 * canvas; the app blits the result with putImageData.
 */

import type { ViewState } from './state.js';
import type { Axis, StagedBox, StagedPoint, StagedScribble, Vox } from './types.js';

export interface Rgba {
  width: number;
  height: number;
  data: Uint8ClampedArray;
}

export const POSITIVE_COLOR: [number, number, number] = [64, 220, 64];
export const NEGATIVE_COLOR: [number, number, number] = [230, 64, 64];
export const MASK_COLOR: [number, number, number] = [64, 128, 255];
export const BOX_COLOR: [number, number, number] = [250, 200, 40];

export function renderImageSlice(
  values: Float32Array,
  height: number,
  width: number,
  windowLo: number,
  windowHi: number,
): Rgba {
  const span = Math.max(windowHi - windowLo, 1e-6);
  const data = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < values.length; i++) {
    const g = Math.round(((values[i] - windowLo) / span) * 255);
    data[4 * i] = g;
    data[4 * i + 1] = g;
    data[4 * i + 2] = g;
    data[4 * i + 3] = 255;
  }
  return { width, height, data };
}

export function overlayMask(base: Rgba, mask: Uint8Array, opacity: number, color = MASK_COLOR): void {
  const alpha = Math.min(Math.max(opacity, 0), 1);
  for (let i = 0; i < mask.length; i++) {
    if (!mask[i]) continue;
    for (let c = 0; c < 3; c++) {
      base.data[4 * i + c] = Math.round((1 - alpha) * base.data[4 * i + c] + alpha * color[c]);
    }
  }
}

/** Project a voxel onto the current slice plane; null when on another slice. */
export function voxelToPlane(voxel: Vox, axis: Axis, index: number): [number, number] | null {
  const [z, y, x] = voxel;
  if (axis === 'z') return z === index ? [y, x] : null;
  if (axis === 'y') return y === index ? [z, x] : null;
  return x === index ? [z, y] : null;
}

export function planeToVoxel(row: number, col: number, axis: Axis, index: number): Vox {
  if (axis === 'z') return [index, row, col];
  if (axis === 'y') return [row, index, col];
  return [row, col, index];
}

function paint(base: Rgba, row: number, col: number, color: [number, number, number]): void {
  if (row < 0 || row >= base.height || col < 0 || col >= base.width) return;
  const i = row * base.width + col;
  base.data[4 * i] = color[0];
  base.data[4 * i + 1] = color[1];
  base.data[4 * i + 2] = color[2];
  base.data[4 * i + 3] = 255;
}

function paintCross(base: Rgba, row: number, col: number, color: [number, number, number]): void {
  paint(base, row, col, color);
  paint(base, row - 1, col, color);
  paint(base, row + 1, col, color);
  paint(base, row, col - 1, color);
  paint(base, row, col + 1, color);
}

export function drawPointGlyphs(base: Rgba, points: StagedPoint[], view: Pick<ViewState, 'axis' | 'sliceIndex'>): void {
  for (const p of points) {
    const rc = voxelToPlane(p.coord, view.axis, view.sliceIndex);
    if (rc) paintCross(base, rc[0], rc[1], p.label === 1 ? POSITIVE_COLOR : NEGATIVE_COLOR);
  }
}

export function drawScribbleGlyphs(
  base: Rgba,
  scribbles: StagedScribble[],
  view: Pick<ViewState, 'axis' | 'sliceIndex'>,
): void {
  for (const s of scribbles) {
    const color = s.label === 1 ? POSITIVE_COLOR : NEGATIVE_COLOR;
    for (const v of s.voxels) {
      const rc = voxelToPlane(v, view.axis, view.sliceIndex);
      if (rc) paint(base, rc[0], rc[1], color);
    }
  }
}

export function drawBoxOutline(base: Rgba, box: StagedBox, view: Pick<ViewState, 'axis' | 'sliceIndex'>): void {
  // the box is an axis-aligned cuboid; draw its in-plane rectangle when the
  // slice lies inside the box along the viewing axis
  const axes: Record<Axis, [number, number, number]> = { z: [0, 1, 2], y: [1, 0, 2], x: [2, 0, 1] };
  const [a, r, c] = axes[view.axis];
  if (view.sliceIndex < box.min[a] || view.sliceIndex > box.max[a]) return;
  for (let col = box.min[c]; col <= box.max[c]; col++) {
    paint(base, box.min[r], col, BOX_COLOR);
    paint(base, box.max[r], col, BOX_COLOR);
  }
  for (let row = box.min[r]; row <= box.max[r]; row++) {
    paint(base, row, box.min[c], BOX_COLOR);
    paint(base, row, box.max[c], BOX_COLOR);
  }
}

/** Slice a flattened (z, y, x) u8 volume along an axis into a 2D plane. */
export function sliceVolume(volume: Uint8Array, shape: Vox, axis: Axis, index: number): Uint8Array {
  const [sz, sy, sx] = shape;
  if (axis === 'z') {
    return volume.subarray(index * sy * sx, (index + 1) * sy * sx).slice();
  }
  if (axis === 'y') {
    const out = new Uint8Array(sz * sx);
    for (let z = 0; z < sz; z++) {
      out.set(volume.subarray(z * sy * sx + index * sx, z * sy * sx + (index + 1) * sx), z * sx);
    }
    return out;
  }
  const out = new Uint8Array(sz * sy);
  for (let z = 0; z < sz; z++) {
    for (let y = 0; y < sy; y++) {
      out[z * sy + y] = volume[z * sy * sx + y * sx + index];
    }
  }
  return out;
}
