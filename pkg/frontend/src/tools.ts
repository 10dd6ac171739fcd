/** Pointer-to-voxel mapping and the freehand scribble capture. */

import { planeToVoxel } from './render.js';
import type { ViewState } from './state.js';
import type { Polarity, Vox } from './types.js';

export interface PlaneGeometry {
  rows: number;
  cols: number;
}

export function planeGeometry(state: Pick<ViewState, 'axis' | 'shape'>): PlaneGeometry {
  const [z, y, x] = state.shape;
  if (state.axis === 'z') return { rows: y, cols: x };
  if (state.axis === 'y') return { rows: z, cols: x };
  return { rows: z, cols: y };
}

/** Canvas pixel -> voxel on the current slice (canvas is scaled by `scale`). */
export function canvasToVoxel(
  state: Pick<ViewState, 'axis' | 'sliceIndex' | 'shape'>,
  px: number,
  py: number,
  scale: number,
): Vox {
  const row = Math.floor(py / scale);
  const col = Math.floor(px / scale);
  return planeToVoxel(row, col, state.axis, state.sliceIndex);
}

/** Collects in-plane voxels during a stroke, clipped to the grid, deduped,
 * with gaps between events filled by line interpolation. */
export class ScribbleCapture {
  private voxels: Vox[] = [];
  private last: [number, number] | null = null;

  constructor(
    private state: Pick<ViewState, 'axis' | 'sliceIndex' | 'shape'>,
    public label: Polarity,
  ) {}

  private pushPlane(row: number, col: number): void {
    const geom = planeGeometry(this.state);
    if (row < 0 || row >= geom.rows || col < 0 || col >= geom.cols) return; // clip to grid
    const voxel = planeToVoxel(row, col, this.state.axis, this.state.sliceIndex);
    const prev = this.voxels[this.voxels.length - 1];
    if (prev && prev[0] === voxel[0] && prev[1] === voxel[1] && prev[2] === voxel[2]) return;
    this.voxels.push(voxel);
  }

  extend(px: number, py: number, scale: number): void {
    const row = Math.floor(py / scale);
    const col = Math.floor(px / scale);
    if (this.last === null) {
      this.pushPlane(row, col);
    } else {
      const [r0, c0] = this.last;
      const steps = Math.max(Math.abs(row - r0), Math.abs(col - c0), 1);
      for (let s = 1; s <= steps; s++) {
        this.pushPlane(Math.round(r0 + ((row - r0) * s) / steps), Math.round(c0 + ((col - c0) * s) / steps));
      }
    }
    this.last = [row, col];
  }

  finish(): Vox[] {
    return this.voxels;
  }
}
