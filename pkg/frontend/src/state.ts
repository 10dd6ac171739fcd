/** Client-side view state and staged (not yet submitted) prompts.
 *
 * The client never edits masks locally; every overlay comes back from the
 * server. Staged prompts are cleared when a submission succeeds, and the box
 * tool is only usable while the session is still on iteration 1 (the server
 * enforces the same rule).
 */

import type { Axis, Polarity, StagedBox, StagedPoint, StagedScribble, Tool, Vox } from './types.js';

export interface ViewState {
  sessionId: string | null;
  shape: Vox;
  axis: Axis;
  sliceIndex: number;
  windowLo: number;
  windowHi: number;
  overlayOpacity: number;
  activeTool: Tool;
  iteration: number;
  scores: number[];
  selectedIndex: number | null;
  dice: number | null;
  diceHistory: number[];
  boxCommitted: boolean;
  staged: {
    points: StagedPoint[];
    scribbles: StagedScribble[];
    box: StagedBox | null;
    boxAnchor: Vox | null; // first corner while the box is being placed
  };
  message: string | null;
}

export function initialState(): ViewState {
  return {
    sessionId: null,
    shape: [1, 1, 1],
    axis: 'z',
    sliceIndex: 0,
    windowLo: 0,
    windowHi: 1,
    overlayOpacity: 0.45,
    activeTool: 'pos-point',
    iteration: 1,
    scores: [],
    selectedIndex: null,
    dice: null,
    diceHistory: [],
    boxCommitted: false,
    staged: { points: [], scribbles: [], box: null, boxAnchor: null },
    message: null,
  };
}

export function inGrid(state: ViewState, voxel: Vox): boolean {
  return voxel.every((c, i) => Number.isInteger(c) && c >= 0 && c < state.shape[i]);
}

export function clampToGrid(state: ViewState, voxel: Vox): Vox {
  return voxel.map((c, i) => Math.min(Math.max(Math.round(c), 0), state.shape[i] - 1)) as Vox;
}

/** Box placement is legal only before the first prediction and only once. */
export function boxAllowed(state: ViewState): boolean {
  return state.iteration === 1 && !state.boxCommitted && state.staged.box === null;
}

export function stagePoint(state: ViewState, voxel: Vox, label: Polarity): void {
  if (!inGrid(state, voxel)) throw new Error(`point ${voxel} outside grid ${state.shape}`);
  state.staged.points.push({ coord: voxel, label });
}

/** Two-click box placement; returns true when the box got completed. */
export function stageBoxCorner(state: ViewState, voxel: Vox): boolean {
  if (!boxAllowed(state) && state.staged.boxAnchor === null) {
    throw new Error('box placement is only allowed at iteration 1');
  }
  const v = clampToGrid(state, voxel);
  if (state.staged.boxAnchor === null) {
    state.staged.boxAnchor = v;
    return false;
  }
  const a = state.staged.boxAnchor;
  state.staged.box = {
    min: a.map((c, i) => Math.min(c, v[i])) as Vox,
    max: a.map((c, i) => Math.max(c, v[i])) as Vox,
  };
  state.staged.boxAnchor = null;
  return true;
}

export function stageScribble(state: ViewState, voxels: Vox[], label: Polarity): void {
  const inside = voxels.filter((v) => inGrid(state, v));
  if (inside.length === 0) return;
  const seen = new Set<string>();
  const unique: Vox[] = [];
  for (const v of inside) {
    const key = v.join(',');
    if (!seen.has(key)) {
      seen.add(key);
      unique.push(v);
    }
  }
  state.staged.scribbles.push({ voxels: unique, label });
}

export function stagedCount(state: ViewState): number {
  return state.staged.points.length + state.staged.scribbles.length + (state.staged.box ? 1 : 0);
}

export function clearStaged(state: ViewState): void {
  state.staged = { points: [], scribbles: [], box: null, boxAnchor: null };
}

export function applyPromptResponse(
  state: ViewState,
  response: { iteration: number; scores: number[]; selected_index: number; dice: number | null },
): void {
  if (state.staged.box !== null) state.boxCommitted = true;
  state.iteration = response.iteration;
  state.scores = response.scores;
  state.selectedIndex = response.selected_index;
  state.dice = response.dice;
  if (response.dice !== null) state.diceHistory.push(response.dice);
  clearStaged(state);
  state.message = null;
}
