/** Thin fetch wrapper over the service endpoints. No local persistence:
 * every view is re-derived from what the service returns. */

import type {
  ArtifactRecord,
  Defect,
  FeedEvent,
  PlanDoc,
  SessionRecord,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`service error ${status}: ${JSON.stringify(detail)}`);
  }
}

export type ReviseResult =
  | { ok: true; record: SessionRecord }
  | { ok: false; defects: Defect[] };

async function parseDetail(res: Response): Promise<unknown> {
  try {
    const body = (await res.json()) as { detail?: unknown };
    return body.detail ?? body;
  } catch {
    return res.statusText;
  }
}

export class ConsoleClient {
  constructor(
    public baseUrl: string,
    private fetchImpl: typeof fetch = fetch,
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) {
      throw new ServiceError(res.status, await parseDetail(res));
    }
    return (await res.json()) as T;
  }

  createSession(userId = "console", requestId?: string): Promise<SessionRecord> {
    return this.request("POST", "/sessions", {
      user_id: userId,
      ...(requestId ? { request_id: requestId } : {}),
    });
  }

  sendMessage(sessionId: string, text: string, requestId?: string): Promise<SessionRecord> {
    return this.request("POST", `/sessions/${sessionId}/messages`, {
      text,
      ...(requestId ? { request_id: requestId } : {}),
    });
  }

  listSessions(): Promise<SessionRecord[]> {
    return this.request("GET", "/sessions");
  }

  getSession(sessionId: string): Promise<SessionRecord> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  /** Raw canonical plan document; the console renders from this and nothing else. */
  getPlan(sessionId: string): Promise<PlanDoc> {
    return this.request("GET", `/sessions/${sessionId}/plan`);
  }

  /** Post an edited plan document. A 400 carries the validator's defect list
   * and leaves the pending interrupt untouched server-side. */
  async revisePlan(
    sessionId: string,
    document: PlanDoc,
    decidedBy = "console",
  ): Promise<ReviseResult> {
    try {
      const record = await this.request<SessionRecord>(
        "POST",
        `/sessions/${sessionId}/plan:revise`,
        { document, decided_by: decidedBy },
      );
      return { ok: true, record };
    } catch (err) {
      if (err instanceof ServiceError && err.status === 400) {
        const detail = err.detail as { defects?: Defect[] };
        if (detail && Array.isArray(detail.defects)) {
          return { ok: false, defects: detail.defects };
        }
      }
      throw err;
    }
  }

  decide(
    interruptId: string,
    verdict: "approve" | "reject",
    decidedBy = "console",
  ): Promise<SessionRecord> {
    return this.request("POST", `/interrupts/${interruptId}/decision`, {
      verdict,
      decided_by: decidedBy,
    });
  }

  fetchEvents(sessionId: string, from = 0): Promise<FeedEvent[]> {
    return this.request("GET", `/sessions/${sessionId}/events?from=${from}`);
  }

  listArtifacts(sessionId: string): Promise<ArtifactRecord[]> {
    return this.request("GET", `/sessions/${sessionId}/artifacts`);
  }

  async fetchArtifact(artifactId: string): Promise<string> {
    const res = await this.fetchImpl(`${this.baseUrl}/artifacts/${artifactId}`);
    if (!res.ok) {
      throw new ServiceError(res.status, await parseDetail(res));
    }
    return res.text();
  }
}
