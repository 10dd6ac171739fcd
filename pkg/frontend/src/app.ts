/** The interactive viewer application.
 *
 * Wires the slice canvas, tool buttons, and status panel to the session
 * service. All segmentation state lives on the server; the client only
 * stages prompts and renders what the server returns.
 */

import { ApiClient, ApiError } from './api.js';
import { decodeImageSlice, decodeMask } from './decode.js';
import {
  drawBoxOutline,
  drawPointGlyphs,
  drawScribbleGlyphs,
  overlayMask,
  renderImageSlice,
  sliceVolume,
  type Rgba,
} from './render.js';
import {
  applyPromptResponse,
  boxAllowed,
  clearStaged,
  initialState,
  stageBoxCorner,
  stagePoint,
  stageScribble,
  stagedCount,
  type ViewState,
} from './state.js';
import { canvasToVoxel, planeGeometry, ScribbleCapture } from './tools.js';
import { renderDice, renderIteration, renderScores, renderSparkline, showMessage } from './panel.js';
import type { Axis, ImageSlicePayload, Tool, Vox } from './types.js';

const SCALE = 12; // canvas pixels per voxel

export interface AppElements {
  canvas: HTMLCanvasElement;
  iteration: HTMLElement;
  scores: HTMLElement;
  dice: HTMLElement;
  sparkline: HTMLElement;
  message: HTMLElement;
  submit: HTMLButtonElement;
  tools: Record<Tool, HTMLButtonElement>;
  axisSelect: HTMLSelectElement;
  sliceInput: HTMLInputElement;
  opacityInput: HTMLInputElement;
}

export class App {
  state: ViewState = initialState();
  lastMask: Uint8Array | null = null;
  private capture: ScribbleCapture | null = null;
  private imageCache = new Map<string, ImageSlicePayload>();

  constructor(
    private api: ApiClient,
    private els: AppElements,
  ) {
    this.bindEvents();
  }

  async start(createBody: Record<string, unknown>): Promise<void> {
    const created = await this.api.createSession(createBody);
    this.state.sessionId = created.session_id;
    this.state.shape = created.shape as Vox;
    this.state.iteration = created.iteration;
    this.state.sliceIndex = Math.floor(created.shape[0] / 2);
    this.els.sliceInput.max = String(created.shape[0] - 1);
    this.els.sliceInput.value = String(this.state.sliceIndex);
    await this.refresh();
  }

  // -- rendering ---------------------------------------------------------------

  async refresh(): Promise<void> {
    const frame = await this.renderFrame();
    const ctx = this.els.canvas.getContext('2d');
    if (ctx) {
      const scaled = this.scaleFrame(frame);
      this.els.canvas.width = scaled.width;
      this.els.canvas.height = scaled.height;
      const img = ctx.createImageData(scaled.width, scaled.height);
      img.data.set(scaled.data);
      ctx.putImageData(img, 0, 0);
    }
    renderIteration(this.els.iteration, this.state.iteration);
    renderScores(this.els.scores, this.state.scores, this.state.selectedIndex);
    renderDice(this.els.dice, this.state.dice);
    renderSparkline(this.els.sparkline, this.state.diceHistory);
    this.els.submit.disabled = stagedCount(this.state) === 0;
    this.els.tools.box.disabled = !boxAllowed(this.state);
  }

  /** Server slice + overlays as a raw RGBA buffer (testable without canvas). */
  async renderFrame(): Promise<Rgba> {
    if (!this.state.sessionId) throw new Error('no session');
    const key = `${this.state.axis}:${this.state.sliceIndex}`;
    let payload = this.imageCache.get(key);
    if (!payload) {
      payload = (await this.api.getSlice(
        this.state.sessionId,
        this.state.axis,
        this.state.sliceIndex,
        'image',
      )) as ImageSlicePayload;
      this.imageCache.set(key, payload);
    }
    const [rows, cols] = payload.shape;
    const frame = renderImageSlice(decodeImageSlice(payload), rows, cols, payload.window.lo, payload.window.hi);
    if (this.lastMask && this.state.overlayOpacity > 0) {
      const plane = sliceVolume(this.lastMask, this.state.shape, this.state.axis, this.state.sliceIndex);
      overlayMask(frame, plane, this.state.overlayOpacity);
    }
    drawPointGlyphs(frame, this.state.staged.points, this.state);
    drawScribbleGlyphs(frame, this.state.staged.scribbles, this.state);
    if (this.state.staged.box) drawBoxOutline(frame, this.state.staged.box, this.state);
    return frame;
  }

  private scaleFrame(frame: Rgba): Rgba {
    const width = frame.width * SCALE;
    const height = frame.height * SCALE;
    const data = new Uint8ClampedArray(width * height * 4);
    for (let y = 0; y < height; y++) {
      const sy = Math.floor(y / SCALE);
      for (let x = 0; x < width; x++) {
        const sx = Math.floor(x / SCALE);
        const src = 4 * (sy * frame.width + sx);
        const dst = 4 * (y * width + x);
        data[dst] = frame.data[src];
        data[dst + 1] = frame.data[src + 1];
        data[dst + 2] = frame.data[src + 2];
        data[dst + 3] = frame.data[src + 3];
      }
    }
    return { width, height, data };
  }

  // -- interactions -------------------------------------------------------------

  handlePointerDown(px: number, py: number): void {
    const tool = this.state.activeTool;
    try {
      if (tool === 'pos-point' || tool === 'neg-point') {
        const voxel = canvasToVoxel(this.state, px, py, SCALE);
        stagePoint(this.state, voxel, tool === 'pos-point' ? 1 : 0);
      } else if (tool === 'box') {
        stageBoxCorner(this.state, canvasToVoxel(this.state, px, py, SCALE));
      } else {
        this.capture = new ScribbleCapture(this.state, tool === 'scribble-pos' ? 1 : 0);
        this.capture.extend(px, py, SCALE);
      }
      this.state.message = null;
    } catch (err) {
      this.state.message = (err as Error).message;
    }
    showMessage(this.els.message, this.state.message);
    void this.refresh();
  }

  handlePointerMove(px: number, py: number): void {
    if (this.capture) {
      this.capture.extend(px, py, SCALE);
    }
  }

  handlePointerUp(): void {
    if (this.capture) {
      stageScribble(this.state, this.capture.finish(), this.capture.label);
      this.capture = null;
      void this.refresh();
    }
  }

  async submit(): Promise<void> {
    if (!this.state.sessionId || stagedCount(this.state) === 0) return;
    const body = {
      points: this.state.staged.points.map((p) => ({ coord: p.coord, label: p.label })),
      scribbles: this.state.staged.scribbles.map((s) => ({ voxels: s.voxels, label: s.label })),
      box: this.state.staged.box ? { min: this.state.staged.box.min, max: this.state.staged.box.max } : null,
    };
    try {
      const response = await this.api.submitPrompts(this.state.sessionId, body);
      this.lastMask = decodeMask(response.mask);
      applyPromptResponse(this.state, response);
      showMessage(this.els.message, null);
    } catch (err) {
      // protocol violations (late box, empty prompts) surface inline, never silently
      if (err instanceof ApiError) {
        this.state.message = `${err.code}: ${err.detail}`;
        if (err.code === 'box_immutable') clearStaged(this.state);
      } else {
        this.state.message = String(err);
      }
      showMessage(this.els.message, this.state.message);
    }
    await this.refresh();
  }

  setTool(tool: Tool): void {
    this.state.activeTool = tool;
    for (const [name, button] of Object.entries(this.els.tools)) {
      button.classList.toggle('active', name === tool);
    }
  }

  async setAxis(axis: Axis): Promise<void> {
    this.state.axis = axis;
    const geom = planeGeometry(this.state);
    const axisLen = { z: this.state.shape[0], y: this.state.shape[1], x: this.state.shape[2] }[axis];
    this.state.sliceIndex = Math.min(this.state.sliceIndex, axisLen - 1);
    this.els.sliceInput.max = String(axisLen - 1);
    void geom;
    await this.refresh();
  }

  async setSlice(index: number): Promise<void> {
    this.state.sliceIndex = index;
    await this.refresh();
  }

  private bindEvents(): void {
    const canvas = this.els.canvas;
    canvas.addEventListener('pointerdown', (e) => {
      const r = canvas.getBoundingClientRect();
      this.handlePointerDown(e.clientX - r.left, e.clientY - r.top);
    });
    canvas.addEventListener('pointermove', (e) => {
      const r = canvas.getBoundingClientRect();
      this.handlePointerMove(e.clientX - r.left, e.clientY - r.top);
    });
    canvas.addEventListener('pointerup', () => this.handlePointerUp());
    canvas.addEventListener('wheel', (e) => {
      e.preventDefault();
      const axisLen = { z: this.state.shape[0], y: this.state.shape[1], x: this.state.shape[2] }[this.state.axis];
      const next = Math.min(Math.max(this.state.sliceIndex + Math.sign(e.deltaY), 0), axisLen - 1);
      this.els.sliceInput.value = String(next);
      void this.setSlice(next);
    });
    canvas.ownerDocument.addEventListener('keydown', (e) => {
      if (e.key !== 'ArrowUp' && e.key !== 'ArrowDown') return;
      const axisLen = { z: this.state.shape[0], y: this.state.shape[1], x: this.state.shape[2] }[this.state.axis];
      const delta = e.key === 'ArrowUp' ? 1 : -1;
      const next = Math.min(Math.max(this.state.sliceIndex + delta, 0), axisLen - 1);
      this.els.sliceInput.value = String(next);
      void this.setSlice(next);
    });
    this.els.submit.addEventListener('click', () => void this.submit());
    for (const [name, button] of Object.entries(this.els.tools)) {
      button.addEventListener('click', () => this.setTool(name as Tool));
    }
    this.els.axisSelect.addEventListener('change', () => void this.setAxis(this.els.axisSelect.value as Axis));
    this.els.sliceInput.addEventListener('input', () => void this.setSlice(Number(this.els.sliceInput.value)));
    this.els.opacityInput.addEventListener('input', () => {
      this.state.overlayOpacity = Number(this.els.opacityInput.value);
      void this.refresh();
    });
  }
}
