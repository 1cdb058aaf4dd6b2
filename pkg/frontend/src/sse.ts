import type { ServerEvent } from './types.js';
import type { FetchLike } from './api.js';

export type StreamHandle = {
  /** Resolves when the server sends its end frame or the stream closes. */
  done: Promise<void>;
  abort: () => void;
};

/**
 * Consume one session event stream. Uses fetch + ReadableStream rather than
 * EventSource so the same code runs in browsers and in node-based tests.
 * Comment frames (keep-alives) are dropped; the `end` frame resolves `done`.
 */
export function subscribeEvents(
  url: string,
  onEvent: (event: ServerEvent) => void,
  fetchFn?: FetchLike,
): StreamHandle {
  const controller = new AbortController();
  const doFetch = fetchFn ?? ((input: string, init?: RequestInit) => fetch(input, init));

  const done = (async () => {
    const response = await doFetch(url, {
      headers: { accept: 'text/event-stream' },
      signal: controller.signal,
    } as RequestInit);
    if (!response.ok || !response.body) {
      throw new Error(`event stream failed: HTTP ${response.status}`);
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder('utf-8');
    let buffer = '';

    while (true) {
      const { value, done: closed } = await reader.read();
      if (closed) return;
      buffer += decoder.decode(value, { stream: true });
      const frames = buffer.split(/\r?\n\r?\n/);
      buffer = frames.pop() ?? '';

      for (const frame of frames) {
        let eventName = 'message';
        const dataLines: string[] = [];
        for (const line of frame.split(/\r?\n/)) {
          if (line.startsWith(':')) continue; // keep-alive comment
          if (line.startsWith('event:')) eventName = line.slice(6).trim();
          else if (line.startsWith('data:')) dataLines.push(line.slice(5).trim());
        }
        if (eventName === 'end') return;
        if (dataLines.length === 0) continue;
        try {
          onEvent(JSON.parse(dataLines.join('\n')) as ServerEvent);
        } catch {
          // a malformed frame must not kill the stream
        }
      }
    }
  })();

  return { done, abort: () => controller.abort() };
}
