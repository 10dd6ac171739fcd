// @vitest-environment jsdom
// End-to-end round trip against the real session service: boots the Python
// server with a tiny checkpoint, drives the DOM app through three point
// submissions, and checks the counter, Dice readout, and score panel.
import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { execFileSync, spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { ApiClient } from '../src/api.js';
import { App, type AppElements } from '../src/app.js';
import type { Tool } from '../src/types.js';

const PORT = 8731 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;
const SCALE = 12;

let server: ChildProcess | null = null;
let workdir = '';

async function serverUp(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const r = await fetch(`${BASE}/healthz`);
      if (r.ok) return;
    } catch (err) {
      lastError = err;
    }
    await new Promise((resolve) => setTimeout(resolve, 400));
  }
  throw new Error(`server never came up: ${lastError}`);
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), 'iseg3d-ui-'));
  execFileSync('python3', [
    '-c',
    [
      'import sys',
      'from iseg3d.model import build_model, save_checkpoint, ModelConfig',
      'cfg = ModelConfig(patch_size=(16,16,16), base_channels=4, depth=2, embed_dim=32,',
      '                  attention_heads=2, transformer_blocks=1, interaction_blocks=1)',
      `save_checkpoint(build_model(cfg, seed=7), sys.argv[1] + '/tiny.pt')`,
    ].join('\n'),
    workdir,
  ]);
  server = spawn('python3', ['-m', 'iseg3d.cli', 'serve', '--checkpoint-dir', workdir, '--port', String(PORT)], {
    stdio: 'ignore',
  });
  await serverUp(60_000);
}, 90_000);

afterAll(() => {
  server?.kill();
  if (workdir) rmSync(workdir, { recursive: true, force: true });
});

function buildDom(): AppElements {
  document.body.innerHTML = `
    <canvas id="slice-canvas"></canvas>
    <div id="iteration"></div>
    <div id="scores"></div>
    <div id="dice"></div>
    <div id="sparkline"></div>
    <div id="message"></div>
    <button id="submit"></button>
    <button id="tool-pos-point"></button>
    <button id="tool-neg-point"></button>
    <button id="tool-box"></button>
    <button id="tool-scribble-pos"></button>
    <button id="tool-scribble-neg"></button>
    <select id="axis"><option value="z">z</option></select>
    <input id="slice" type="range" />
    <input id="opacity" type="range" value="0.45" />
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

describe('interactive round trip', () => {
  it(
    'drives three point iterations and mirrors server state',
    async () => {
      const els = buildDom();
      const app = new App(new ApiClient(BASE), els);
      await app.start({
        checkpoint: 'tiny',
        synthetic: {
          grid_size: [16, 16, 16],
          radius_range: [2.0, 4.0],
          deformation_amplitude: 1.0,
          seed: 5,
          case_seed: 2,
          with_gt: true,
        },
      });
      expect(els.iteration.dataset.iteration).toBe('1');

      const clicks: [number, number][] = [
        [8 * SCALE + 2, 8 * SCALE + 2],
        [6 * SCALE + 2, 9 * SCALE + 2],
        [10 * SCALE + 2, 5 * SCALE + 2],
      ];
      for (const [px, py] of clicks) {
        app.setTool('pos-point');
        app.handlePointerDown(px, py);
        expect(app.state.staged.points.length).toBe(1);
        await app.submit();
        expect(app.state.message).toBeNull();
        expect(app.state.staged.points.length).toBe(0); // staged cleared on submit
      }

      // three submissions: counter reads 4
      expect(els.iteration.dataset.iteration).toBe('4');

      // displayed dice equals the server-reported value to 4 decimals
      const state = (await new ApiClient(BASE).getState(app.state.sessionId!)) as {
        history: { dice: number; scores: number[]; selected_index: number }[];
      };
      const last = state.history[state.history.length - 1];
      expect(els.dice.dataset.dice).toBe(last.dice.toFixed(4));

      // confidence panel shows all M scores with the argmax highlighted
      const chips = els.scores.querySelectorAll('.score');
      expect(chips.length).toBe(last.scores.length);
      const highlighted = els.scores.querySelectorAll('.score.selected');
      expect(highlighted.length).toBe(1);
      expect((highlighted[0] as HTMLElement).dataset.index).toBe(String(last.selected_index));
      const argmax = last.scores.indexOf(Math.max(...last.scores));
      expect(last.selected_index).toBe(argmax);

      // the overlay mask is exactly the server's latest mask
      expect(app.lastMask).not.toBeNull();
      expect(app.lastMask!.length).toBe(16 * 16 * 16);
    },
    120_000,
  );

  it(
    'surfaces a late box as an inline message, not a silent failure',
    async () => {
      const els = buildDom();
      const app = new App(new ApiClient(BASE), els);
      await app.start({
        checkpoint: 'tiny',
        synthetic: {
          grid_size: [16, 16, 16],
          radius_range: [2.0, 4.0],
          deformation_amplitude: 1.0,
          seed: 5,
          case_seed: 3,
          with_gt: true,
        },
      });
      app.setTool('pos-point');
      app.handlePointerDown(8 * SCALE, 8 * SCALE);
      await app.submit();
      expect(app.state.iteration).toBe(2);

      // client-side guard: the box tool is disabled and raises a message
      expect(els.tools.box.disabled).toBe(true);
      app.setTool('box');
      app.handlePointerDown(2 * SCALE, 2 * SCALE);
      expect(els.message.textContent).toMatch(/iteration 1/);

      // server-side guard: a forced late box comes back as an inline 409 message
      app.state.staged.box = { min: [2, 2, 2], max: [12, 12, 12] };
      app.state.staged.points = [{ coord: [4, 4, 4], label: 1 }];
      await app.submit();
      expect(els.message.textContent).toMatch(/box_immutable/);
      expect(app.state.iteration).toBe(2); // nothing advanced
    },
    120_000,
  );
});
