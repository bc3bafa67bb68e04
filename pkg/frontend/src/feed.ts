/** Resumable live event feed.
 *
 * Consumes the service's text/event-stream endpoint over fetch streaming.
 * On any disconnect it resubscribes from the last rendered sequence, so the
 * feed is gapless and duplicate-free no matter how often the connection
 * drops. The stream ends for good once a terminal session event arrives.
 */

import type { FeedEvent } from "./types.js";
import { TERMINAL_EVENT_KINDS } from "./types.js";

export interface FeedOptions {
  onEvent?: (event: FeedEvent) => void;
  onError?: (err: unknown) => void;
  reconnectDelayMs?: number;
  fetchImpl?: typeof fetch;
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

/** Parse complete `id:`/`data:` frames out of buffer, returning the rest. */
export function parseFrames(buffer: string): { events: FeedEvent[]; rest: string } {
  const events: FeedEvent[] = [];
  let rest = buffer;
  for (;;) {
    const cut = rest.indexOf("\n\n");
    if (cut < 0) break;
    const frame = rest.slice(0, cut);
    rest = rest.slice(cut + 2);
    const dataLines = frame
      .split("\n")
      .filter((line) => line.startsWith("data:"))
      .map((line) => line.slice(5).trimStart());
    if (dataLines.length === 0) continue; // comment / keepalive frame
    events.push(JSON.parse(dataLines.join("\n")) as FeedEvent);
  }
  return { events, rest };
}

export class EventFeed {
  readonly events: FeedEvent[] = [];
  lastSequence = -1;
  reconnects = 0;
  private stopped = false;
  private sawTerminal = false;

  constructor(
    private baseUrl: string,
    private sessionId: string,
    private opts: FeedOptions = {},
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  get done(): boolean {
    return this.sawTerminal;
  }

  stop(): void {
    this.stopped = true;
  }

  private accept(event: FeedEvent): void {
    if (event.sequence <= this.lastSequence) return; // duplicate after resume
    this.lastSequence = event.sequence;
    this.events.push(event);
    this.opts.onEvent?.(event);
    if (TERMINAL_EVENT_KINDS.includes(event.kind)) this.sawTerminal = true;
  }

  private async streamOnce(): Promise<void> {
    const fetchImpl = this.opts.fetchImpl ?? fetch;
    const url = `${this.baseUrl}/sessions/${this.sessionId}/events?from=${this.lastSequence + 1}`;
    const res = await fetchImpl(url, {
      headers: {
        accept: "text/event-stream",
        ...(this.lastSequence >= 0 ? { "Last-Event-ID": String(this.lastSequence) } : {}),
      },
    });
    if (!res.ok || !res.body) {
      throw new Error(`event stream failed with status ${res.status}`);
    }
    const reader = res.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      buffer += decoder.decode(value, { stream: true });
      const { events, rest } = parseFrames(buffer);
      buffer = rest;
      for (const event of events) this.accept(event);
      if (this.stopped || this.sawTerminal) {
        await reader.cancel().catch(() => {});
        return;
      }
    }
  }

  /** Run until a terminal event or stop(); resolves with all events seen. */
  async run(from = 0): Promise<FeedEvent[]> {
    this.lastSequence = from - 1;
    while (!this.stopped && !this.sawTerminal) {
      try {
        await this.streamOnce();
      } catch (err) {
        this.opts.onError?.(err);
      }
      if (this.stopped || this.sawTerminal) break;
      this.reconnects += 1;
      await sleep(this.opts.reconnectDelayMs ?? 200);
    }
    return this.events;
  }
}
