/** Wire types for the session service (protocol version 1). */

export const PROTOCOL_VERSION = 1;

export type Axis = 'z' | 'y' | 'x';
export type Vox = [number, number, number];

/** 1 = positive (include), 0 = negative (exclude). */
export type Polarity = 0 | 1;

export type Tool = 'pos-point' | 'neg-point' | 'box' | 'scribble-pos' | 'scribble-neg';

export interface MaskPayload {
  encoding: 'raw' | 'rle';
  shape: number[];
  data_b64?: string;
  rle?: number[];
}

export interface CreateSessionResponse {
  version: number;
  session_id: string;
  iteration: number;
  shape: number[];
  original_shape: number[];
  spacing: number[];
  offset: number[];
  has_gt: boolean;
  scores_per_prediction: number;
}

export interface PromptResponse {
  version: number;
  iteration: number;
  scores: number[];
  selected_index: number;
  dice: number | null;
  mask: MaskPayload;
}

export interface ImageSlicePayload {
  version: number;
  axis: Axis;
  index: number;
  layer: 'image';
  shape: number[];
  dtype: 'f32';
  encoding: 'raw';
  data_b64: string;
  window: { lo: number; hi: number };
}

export type LabelSlicePayload = MaskPayload & {
  version: number;
  axis: Axis;
  index: number;
  layer: 'mask' | 'prompts';
  dtype: 'u8';
};

export interface StagedPoint {
  coord: Vox;
  label: Polarity;
}

export interface StagedBox {
  min: Vox;
  max: Vox;
}

export interface StagedScribble {
  voxels: Vox[];
  label: Polarity;
}

export interface PromptRequestBody {
  version: number;
  points: { coord: Vox; label: Polarity }[];
  scribbles: { voxels: Vox[]; label: Polarity }[];
  box: { min: Vox; max: Vox } | null;
}

export interface ApiErrorBody {
  error: string;
  detail: string;
}
