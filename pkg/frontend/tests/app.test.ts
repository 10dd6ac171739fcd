// @vitest-environment jsdom
// App-level behavior that needs a DOM but no live server: a stubbed fetch
// implements just enough of the protocol.
import { beforeEach, describe, expect, it, vi } from 'vitest';

import { ApiClient } from '../src/api.js';
import { App, type AppElements } from '../src/app.js';
import type { Tool } from '../src/types.js';

function buildDom(): AppElements {
  document.body.innerHTML = `
    <canvas id="slice-canvas"></canvas>
    <div id="iteration"></div><div id="scores"></div><div id="dice"></div>
    <div id="sparkline"></div><div id="message"></div>
    <button id="submit"></button>
    <button id="tool-pos-point"></button><button id="tool-neg-point"></button>
    <button id="tool-box"></button>
    <button id="tool-scribble-pos"></button><button id="tool-scribble-neg"></button>
    <select id="axis"><option value="z">z</option></select>
    <input id="slice" type="range" /><input id="opacity" type="range" value="0.45" />
  `;
  const tools = {} as Record<Tool, HTMLButtonElement>;
  for (const tool of ['pos-point', 'neg-point', 'box', 'scribble-pos', 'scribble-neg'] as Tool[]) {
    tools[tool] = document.getElementById(`tool-${tool}`) as HTMLButtonElement;
  }
  return {
    canvas: document.getElementById('slice-canvas') as HTMLCanvasElement,
    iteration: document.getElementById('iteration') as HTMLElement,
    scores: document.getElementById('scores') as HTMLElement,
    dice: document.getElementById('dice') as HTMLElement,
    sparkline: document.getElementById('sparkline') as HTMLElement,
    message: document.getElementById('message') as HTMLElement,
    submit: document.getElementById('submit') as HTMLButtonElement,
    tools,
    axisSelect: document.getElementById('axis') as HTMLSelectElement,
    sliceInput: document.getElementById('slice') as HTMLInputElement,
    opacityInput: document.getElementById('opacity') as HTMLInputElement,
  };
}

const SHAPE = [8, 8, 8];

function fakeServer(): typeof fetch {
  let iteration = 1;
  const imageB64 = Buffer.from(new Float32Array(64).fill(0.5).buffer).toString('base64');
  return vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    const json = (status: number, doc: unknown) =>
      new Response(JSON.stringify(doc), { status, headers: { 'content-type': 'application/json' } });
    if (url.endsWith('/sessions')) {
      return json(201, {
        version: 1, session_id: 'fake', iteration: 1, shape: SHAPE, original_shape: SHAPE,
        spacing: [1, 1, 1], offset: [0, 0, 0], has_gt: true, scores_per_prediction: 3,
      });
    }
    if (url.includes('/prompts')) {
      if (body.box && iteration > 1) {
        return json(409, { error: 'box_immutable', detail: 'the box prompt is fixed at iteration 1' });
      }
      iteration += 1;
      return json(200, {
        version: 1, iteration, scores: [0.1, 0.8, 0.3], selected_index: 1, dice: 0.7312,
        mask: { encoding: 'rle', shape: SHAPE, rle: [0, 256, 1, 128, 0, 128] },
      });
    }
    if (url.includes('/slice')) {
      return json(200, {
        version: 1, axis: 'z', index: 4, layer: 'image', shape: [8, 8], dtype: 'f32',
        encoding: 'raw', data_b64: imageB64, window: { lo: 0, hi: 1 },
      });
    }
    return json(404, { error: 'unknown', detail: url });
  }) as unknown as typeof fetch;
}

describe('app against a stubbed protocol', () => {
  beforeEach(() => {
    vi.restoreAllMocks();
  });

  it('submit button stays disabled with zero staged prompts', async () => {
    vi.stubGlobal('fetch', fakeServer());
    const els = buildDom();
    const app = new App(new ApiClient('http://stub'), els);
    await app.start({ checkpoint: 'x', synthetic: {} });
    expect(els.submit.disabled).toBe(true);
    app.setTool('pos-point');
    app.handlePointerDown(4 * 12, 4 * 12);
    await app.refresh();
    expect(els.submit.disabled).toBe(false);
  });

  it('renders the server mask overlay, never a locally edited one', async () => {
    vi.stubGlobal('fetch', fakeServer());
    const els = buildDom();
    const app = new App(new ApiClient('http://stub'), els);
    await app.start({ checkpoint: 'x', synthetic: {} });
    app.setTool('pos-point');
    app.handlePointerDown(4 * 12, 4 * 12);
    await app.submit();
    expect(app.lastMask).not.toBeNull();
    // exactly the RLE the server sent: 256 zeros, 128 ones, 128 zeros
    expect(app.lastMask!.slice(256, 384).every((v) => v === 1)).toBe(true);
    expect(app.lastMask!.slice(0, 256).every((v) => v === 0)).toBe(true);
    expect(els.iteration.dataset.iteration).toBe('2');
    expect(els.dice.dataset.dice).toBe('0.7312');
  });

  it('arrow keys change the slice within bounds', async () => {
    vi.stubGlobal('fetch', fakeServer());
    const els = buildDom();
    const app = new App(new ApiClient('http://stub'), els);
    await app.start({ checkpoint: 'x', synthetic: {} });
    const start = app.state.sliceIndex;
    document.dispatchEvent(new KeyboardEvent('keydown', { key: 'ArrowUp' }));
    expect(app.state.sliceIndex).toBe(start + 1);
    for (let i = 0; i < 20; i++) document.dispatchEvent(new KeyboardEvent('keydown', { key: 'ArrowDown' }));
    expect(app.state.sliceIndex).toBe(0);
  });

  it('server 409 on a late box shows the inline message and drops the stale box', async () => {
    vi.stubGlobal('fetch', fakeServer());
    const els = buildDom();
    const app = new App(new ApiClient('http://stub'), els);
    await app.start({ checkpoint: 'x', synthetic: {} });
    app.setTool('pos-point');
    app.handlePointerDown(4 * 12, 4 * 12);
    await app.submit();
    // force a stale staged box past the client guard; the server must reject it
    app.state.staged.box = { min: [1, 1, 1], max: [5, 5, 5] };
    app.state.staged.points = [{ coord: [2, 2, 2], label: 1 }];
    await app.submit();
    expect(els.message.textContent).toContain('box_immutable');
    expect(app.state.staged.box).toBeNull();
    expect(els.iteration.dataset.iteration).toBe('2');
  });
});
