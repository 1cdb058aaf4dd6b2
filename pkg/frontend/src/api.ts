import type { Envelope, OrderRecord } from './types.js';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly type: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export type Action =
  | { action: 'ground' }
  | { action: 'propose'; text?: string }
  | { action: 'select'; index?: number; bundle?: string[] }
  | { action: 'temporal'; text?: string; startDate?: string; durationDays?: number }
  | { action: 'draft' }
  | { action: 'review'; text?: string }
  | { action: 'confirm'; confirmation: string }
  | { action: 'abort'; reason?: string };

/** Thin client over the session API; the server stays authoritative. */
export class CocreationApi {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl = '', fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, '');
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  get baseUrl(): string {
    return this.base;
  }

  async openSession(
    intentText: string,
    defaultParameters?: Record<string, string>,
    backend?: Record<string, string>,
  ): Promise<Envelope> {
    return this.request('POST', '/sessions', { intentText, defaultParameters, backend });
  }

  async getSession(sessionId: string): Promise<Envelope> {
    return this.request('GET', `/sessions/${sessionId}`);
  }

  async act(sessionId: string, action: Action): Promise<Envelope> {
    return this.request('POST', `/sessions/${sessionId}/messages`, action);
  }

  async close(sessionId: string): Promise<Envelope> {
    return this.request('DELETE', `/sessions/${sessionId}`);
  }

  async listOrders(): Promise<OrderRecord[]> {
    const body = await this.request<{ orders: OrderRecord[] }>('GET', '/orders');
    return body.orders;
  }

  eventsUrl(sessionId: string): string {
    return `${this.base}/sessions/${sessionId}/events`;
  }

  private async request<T = Envelope>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method, headers: { 'content-type': 'application/json' } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchFn(`${this.base}${path}`, init);
    const doc = await response.json().catch(() => ({}));
    if (!response.ok) {
      const err = (doc as { error?: { type?: string; message?: string } }).error;
      throw new ApiError(
        response.status,
        err?.type ?? 'HttpError',
        err?.message ?? `HTTP ${response.status}`,
      );
    }
    return doc as T;
  }
}
