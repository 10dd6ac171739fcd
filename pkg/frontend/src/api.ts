/** Thin typed client over the session service HTTP API. */

import {
  PROTOCOL_VERSION,
  type Axis,
  type CreateSessionResponse,
  type ImageSlicePayload,
  type LabelSlicePayload,
  type PromptRequestBody,
  type PromptResponse,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    public detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

async function unwrap<T>(response: Response): Promise<T> {
  const body = await response.json();
  if (!response.ok) {
    throw new ApiError(response.status, body.error ?? 'unknown', body.detail ?? response.statusText);
  }
  return body as T;
}

export class ApiClient {
  constructor(private baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, '')}${path}`;
  }

  async createSession(body: Record<string, unknown>): Promise<CreateSessionResponse> {
    const response = await fetch(this.url('/sessions'), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ version: PROTOCOL_VERSION, ...body }),
    });
    return unwrap<CreateSessionResponse>(response);
  }

  async submitPrompts(sessionId: string, prompts: Omit<PromptRequestBody, 'version'>): Promise<PromptResponse> {
    const response = await fetch(this.url(`/sessions/${sessionId}/prompts`), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ version: PROTOCOL_VERSION, ...prompts }),
    });
    return unwrap<PromptResponse>(response);
  }

  async getSlice(
    sessionId: string,
    axis: Axis,
    index: number,
    layer: 'image' | 'mask' | 'prompts',
  ): Promise<ImageSlicePayload | LabelSlicePayload> {
    const params = new URLSearchParams({ axis, index: String(index), layer });
    const response = await fetch(this.url(`/sessions/${sessionId}/slice?${params}`));
    return unwrap(response);
  }

  async getState(sessionId: string): Promise<Record<string, unknown>> {
    const response = await fetch(this.url(`/sessions/${sessionId}/state`));
    return unwrap(response);
  }
}
