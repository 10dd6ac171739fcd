import { ApiClient } from './api.js';
import { App, type AppElements } from './app.js';
import type { Tool } from './types.js';

function grab<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

export function collectElements(): AppElements {
  const tools = {} as Record<Tool, HTMLButtonElement>;
  for (const tool of ['pos-point', 'neg-point', 'box', 'scribble-pos', 'scribble-neg'] as Tool[]) {
    tools[tool] = grab<HTMLButtonElement>(`tool-${tool}`);
  }
  return {
    canvas: grab<HTMLCanvasElement>('slice-canvas'),
    iteration: grab('iteration'),
    scores: grab('scores'),
    dice: grab('dice'),
    sparkline: grab('sparkline'),
    message: grab('message'),
    submit: grab<HTMLButtonElement>('submit'),
    tools,
    axisSelect: grab<HTMLSelectElement>('axis'),
    sliceInput: grab<HTMLInputElement>('slice'),
    opacityInput: grab<HTMLInputElement>('opacity'),
  };
}

export async function boot(): Promise<App> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get('server') ?? 'http://127.0.0.1:8000';
  const checkpoint = params.get('checkpoint') ?? 'tiny';
  const app = new App(new ApiClient(base), collectElements());
  await app.start({
    checkpoint,
    synthetic: { case_seed: Number(params.get('case') ?? 0), with_gt: true },
  });
  return app;
}

if (typeof document !== 'undefined' && document.getElementById('slice-canvas')) {
  boot().catch((err) => {
    const el = document.getElementById('message');
    if (el) el.textContent = String(err);
  });
}
