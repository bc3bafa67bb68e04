import { createServer } from "node:http";
import type { AddressInfo, Server } from "node:net";
import { afterEach, describe, expect, it } from "vitest";

import { EventFeed, parseFrames } from "../src/feed.js";
import type { FeedEvent } from "../src/types.js";

function makeEvents(count: number): FeedEvent[] {
  const events: FeedEvent[] = [];
  for (let i = 0; i < count; i++) {
    events.push({
      sequence: i,
      kind: i === count - 1 ? "session_completed" : "step_started",
      step_index: i === count - 1 ? null : i + 1,
      payload: {},
      timestamp: "2025-08-09T00:00:00Z",
    });
  }
  return events;
}

/** SSE server that kills the connection after `dropAfter` frames, forcing the
 * client to resubscribe from its last sequence. */
function sseServer(events: FeedEvent[], dropAfter: number): Promise<{ server: Server; url: string }> {
  const server = createServer((req, res) => {
    const url = new URL(req.url!, "http://localhost");
    let from = Number(url.searchParams.get("from") ?? "0");
    const lastId = req.headers["last-event-id"];
    if (typeof lastId === "string") from = Number(lastId) + 1;
    res.writeHead(200, { "content-type": "text/event-stream" });
    let sent = 0;
    for (const ev of events.slice(from)) {
      res.write(`id: ${ev.sequence}\ndata: ${JSON.stringify(ev)}\n\n`);
      sent += 1;
      if (sent >= dropAfter && ev.sequence < events.length - 1) {
        // simulate a dropped connection mid-stream, after the frames flush
        setTimeout(() => res.destroy(), 20);
        return;
      }
    }
    res.end();
  });
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const { port } = server.address() as AddressInfo;
      resolve({ server, url: `http://127.0.0.1:${port}` });
    });
  });
}

describe("parseFrames", () => {
  it("parses complete frames and keeps the partial tail", () => {
    const ev = { sequence: 0, kind: "step_started", step_index: 1, payload: {}, timestamp: "t" };
    const text = `id: 0\ndata: ${JSON.stringify(ev)}\n\nid: 1\nda`;
    const { events, rest } = parseFrames(text);
    expect(events).toEqual([ev]);
    expect(rest).toBe("id: 1\nda");
  });

  it("skips comment and keepalive frames", () => {
    const { events, rest } = parseFrames(": ping\n\n");
    expect(events).toEqual([]);
    expect(rest).toBe("");
  });
});

describe("EventFeed", () => {
  let server: Server | null = null;
  afterEach(() => {
    server?.close();
    server = null;
  });

  it("streams a session feed to its terminal event", async () => {
    const events = makeEvents(5);
    const started = await sseServer(events, Infinity);
    server = started.server;
    const feed = new EventFeed(started.url, "s-1");
    const seen = await feed.run();
    expect(seen).toEqual(events);
    expect(feed.done).toBe(true);
    expect(feed.reconnects).toBe(0);
  });

  it("resumes gaplessly and without duplicates across forced disconnects", async () => {
    const events = makeEvents(12);
    const started = await sseServer(events, 3); // dropped every 3 frames
    server = started.server;
    const feed = new EventFeed(started.url, "s-1", { reconnectDelayMs: 5 });
    const seen = await feed.run();
    expect(feed.reconnects).toBeGreaterThan(0);
    expect(seen.map((e) => e.sequence)).toEqual(events.map((e) => e.sequence));
    expect(seen[seen.length - 1]!.kind).toBe("session_completed");
  });

  it("drops duplicate sequences replayed by an overlapping resume", async () => {
    // server ignores `from` and always replays everything
    const events = makeEvents(4);
    server = createServer((_req, res) => {
      res.writeHead(200, { "content-type": "text/event-stream" });
      for (const ev of events) {
        res.write(`id: ${ev.sequence}\ndata: ${JSON.stringify(ev)}\n\n`);
      }
      res.end();
    });
    const url: string = await new Promise((resolve) => {
      server!.listen(0, "127.0.0.1", () => {
        const { port } = server!.address() as AddressInfo;
        resolve(`http://127.0.0.1:${port}`);
      });
    });
    const feed = new EventFeed(url, "s-1", { reconnectDelayMs: 5 });
    const seen = await feed.run(2); // pretend 0..1 were already rendered
    expect(seen.map((e) => e.sequence)).toEqual([2, 3]);
  });

  it("reports stream errors and keeps retrying until stopped", async () => {
    const errors: unknown[] = [];
    const feed = new EventFeed("http://127.0.0.1:1", "s-1", {
      reconnectDelayMs: 5,
      onError: (err) => {
        errors.push(err);
        if (errors.length >= 3) feed.stop();
      },
    });
    await feed.run();
    expect(errors.length).toBeGreaterThanOrEqual(3);
    expect(feed.done).toBe(false);
  });
});
