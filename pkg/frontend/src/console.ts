/** Operator console view: session picker, plan inspector with dependency
 * edges, interrupt decision panel, live event feed, artifact browser.
 *
 * All state comes from the service; the only local mutation lives in the
 * explicit edit buffer. Rendering is a full redraw from the view state.
 */

import { ConsoleClient, ServiceError } from "./client.js";
import { EditBuffer } from "./edit.js";
import { EventFeed } from "./feed.js";
import { MalformedPlan, renderPlan } from "./plan.js";
import type { PlanView } from "./plan.js";
import type {
  ArtifactRecord,
  Defect,
  FeedEvent,
  PlanDoc,
  SessionRecord,
} from "./types.js";
import { TERMINAL_STATUSES } from "./types.js";

function el(
  tag: string,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElement {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  for (const child of children) {
    node.append(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return node;
}

export class OperatorConsole {
  sessions: SessionRecord[] = [];
  selected: SessionRecord | null = null;
  planDoc: PlanDoc | null = null;
  planView: PlanView | null = null;
  planError: string | null = null;
  /** Defects returned by the last rejected edit, shown inline on the plan. */
  editDefects: Defect[] = [];
  editBuffer: EditBuffer | null = null;
  feed: EventFeed | null = null;
  feedEvents: FeedEvent[] = [];
  artifacts: ArtifactRecord[] = [];
  notice: string | null = null;

  private root: HTMLElement | null = null;
  private feedRun: Promise<unknown> | null = null;
  private busy: Promise<void> = Promise.resolve();

  constructor(public client: ConsoleClient) {}

  /** Serialize UI-triggered actions; tests await this to observe settled state. */
  whenIdle(): Promise<void> {
    return this.busy;
  }

  private enqueue(action: () => Promise<void>): void {
    this.busy = this.busy.then(action).catch((err) => {
      this.notice = err instanceof Error ? err.message : String(err);
      this.redraw();
    });
  }

  async refreshSessions(): Promise<void> {
    this.sessions = await this.client.listSessions();
    this.redraw();
  }

  async select(sessionId: string): Promise<void> {
    this.selected = await this.client.getSession(sessionId);
    this.editDefects = [];
    this.editBuffer = null;
    this.notice = null;
    await this.refreshPlan();
    this.artifacts = await this.client.listArtifacts(sessionId);
    this.redraw();
  }

  private async refreshPlan(): Promise<void> {
    if (!this.selected) return;
    this.planDoc = null;
    this.planView = null;
    this.planError = null;
    try {
      this.planDoc = await this.client.getPlan(this.selected.session_id);
      this.planView = renderPlan(this.planDoc, this.editDefects);
    } catch (err) {
      if (err instanceof ServiceError && err.status === 404) return; // no plan yet
      if (err instanceof MalformedPlan) {
        this.planError = `cannot render plan: ${err.message}`;
        return;
      }
      throw err;
    }
  }

  /** Live feed from the last rendered sequence; updates the view per event. */
  monitor(): void {
    if (!this.selected || this.feed) return;
    const sessionId = this.selected.session_id;
    this.feed = new EventFeed(this.client.baseUrl, sessionId, {
      onEvent: (event) => {
        this.feedEvents.push(event);
        this.redraw();
      },
    });
    const from = this.feedEvents.length
      ? this.feedEvents[this.feedEvents.length - 1]!.sequence + 1
      : 0;
    this.feedRun = this.feed.run(from).then(async () => {
      this.selected = await this.client.getSession(sessionId);
      this.artifacts = await this.client.listArtifacts(sessionId);
      this.redraw();
    });
  }

  /** Resolves once the feed has drained through the terminal event. */
  async monitorDone(): Promise<void> {
    await this.feedRun;
  }

  openEditor(): void {
    if (!this.planDoc) return;
    this.editBuffer = new EditBuffer(this.planDoc);
    this.redraw();
  }

  restoreEdit(): void {
    this.editBuffer?.restore();
    this.editDefects = [];
    if (this.planDoc) this.planView = renderPlan(this.planDoc, []);
    this.redraw();
  }

  /** Post the edit buffer. Rejected edits surface inline defects and leave
   * the pending interrupt (and the buffer) in place. */
  async postEdit(): Promise<void> {
    if (!this.selected || !this.editBuffer) return;
    const outgoing = this.editBuffer.document();
    if (!this.editBuffer.attributable(outgoing)) {
      throw new Error("edit buffer diverged from fetched document + edits");
    }
    const result = await this.client.revisePlan(this.selected.session_id, outgoing);
    if (!result.ok) {
      this.editDefects = result.defects;
      if (this.planDoc) this.planView = renderPlan(this.planDoc, this.editDefects);
      this.redraw();
      return;
    }
    this.selected = result.record;
    this.editDefects = [];
    this.editBuffer = null;
    await this.refreshPlan();
    this.redraw();
  }

  async decide(verdict: "approve" | "reject"): Promise<void> {
    const pending = this.selected?.pending_interrupt;
    if (!this.selected || !pending) return;
    this.monitor(); // subscribe before execution starts so no event is missed
    try {
      this.selected = await this.client.decide(pending.interrupt_id, verdict);
    } catch (err) {
      if (err instanceof ServiceError && err.status === 409) {
        // Resolved elsewhere; refresh rather than fail.
        this.selected = await this.client.getSession(this.selected.session_id);
      } else {
        throw err;
      }
    }
    await this.refreshPlan();
    this.artifacts = await this.client.listArtifacts(this.selected.session_id);
    this.redraw();
  }

  mount(root: HTMLElement): void {
    this.root = root;
    this.redraw();
  }

  private redraw(): void {
    if (!this.root) return;
    this.root.replaceChildren(
      this.renderSessions(),
      this.renderPlanPanel(),
      this.renderInterruptPanel(),
      this.renderFeed(),
      this.renderArtifacts(),
    );
  }

  private renderSessions(): HTMLElement {
    const items = this.sessions.map((s) =>
      el("li", { "data-session": s.session_id }, [
        el(
          "button",
          { class: "select", "data-session": s.session_id },
          [`${s.session_id} (${s.status})`],
        ),
      ]),
    );
    const list = el("ul", { class: "sessions" }, items);
    list.querySelectorAll("button.select").forEach((btn) => {
      btn.addEventListener("click", () => {
        this.enqueue(() => this.select(btn.getAttribute("data-session")!));
      });
    });
    return el("section", { class: "session-list" }, [list]);
  }

  private renderPlanPanel(): HTMLElement {
    if (this.planError) {
      return el("section", { class: "plan" }, [
        el("div", { class: "error-banner" }, [this.planError]),
      ]);
    }
    if (!this.planView) {
      return el("section", { class: "plan" }, [el("p", {}, ["no plan"])]);
    }
    const steps = this.planView.steps.map((view) => {
      const badges = view.defects.map((d) =>
        el("span", { class: "defect", "data-kind": d.kind }, [`${d.kind}: ${d.detail}`]),
      );
      return el(
        "li",
        { class: "step", "data-index": String(view.step.index) },
        [
          el("span", { class: "capability" }, [view.step.capability]),
          el("span", { class: "objective" }, [view.step.objective]),
          el("span", { class: "inputs" }, [
            view.step.inputs.map((k) => `${k.type}/${k.key}`).join(", "),
          ]),
          el("span", { class: "output" }, [
            `${view.step.output.type}/${view.step.output.key}`,
          ]),
          ...badges,
        ],
      );
    });
    const edges = this.planView.edges.map((e) =>
      el(
        "li",
        { class: "edge", "data-from": String(e.from), "data-to": String(e.to) },
        [`step ${e.from} -> step ${e.to} (${e.key.type}/${e.key.key})`],
      ),
    );
    return el("section", { class: "plan" }, [
      el("h2", {}, [
        `plan ${this.planView.planId} rev ${this.planView.revision}` +
          (this.planView.approved ? " (approved)" : ""),
      ]),
      el("ol", { class: "steps" }, steps),
      el("ul", { class: "edges" }, edges),
    ]);
  }

  private renderInterruptPanel(): HTMLElement {
    const pending = this.selected?.pending_interrupt;
    if (!pending) {
      const status = this.selected ? this.selected.status : "none";
      const terminal = this.selected && TERMINAL_STATUSES.includes(this.selected.status);
      return el("section", { class: "interrupt" }, [
        el("span", { class: terminal ? "status terminal" : "status" }, [status]),
        ...(this.selected?.abort_reason
          ? [el("span", { class: "abort-reason" }, [this.selected.abort_reason])]
          : []),
      ]);
    }
    const approve = el("button", { class: "approve" }, ["approve"]);
    const reject = el("button", { class: "reject" }, ["reject"]);
    const edit = el("button", { class: "edit" }, ["edit"]);
    approve.addEventListener("click", () => this.enqueue(() => this.decide("approve")));
    reject.addEventListener("click", () => this.enqueue(() => this.decide("reject")));
    edit.addEventListener("click", () => {
      this.openEditor();
    });
    const children: (Node | string)[] = [
      el("span", { class: "kind" }, [pending.kind]),
      el("span", { class: "interrupt-id" }, [pending.interrupt_id]),
      approve,
      reject,
      edit,
    ];
    if (this.editBuffer) {
      const post = el("button", { class: "post-edit" }, ["post edit"]);
      const restore = el("button", { class: "restore" }, ["restore"]);
      post.addEventListener("click", () => this.enqueue(() => this.postEdit()));
      restore.addEventListener("click", () => {
        this.restoreEdit();
      });
      children.push(
        el("span", { class: "edit-open" }, [
          this.editBuffer.dirty ? "edit buffer (modified)" : "edit buffer (clean)",
        ]),
        post,
        restore,
      );
    }
    if (this.notice) children.push(el("span", { class: "notice" }, [this.notice]));
    return el("section", { class: "interrupt" }, children);
  }

  private renderFeed(): HTMLElement {
    const items = this.feedEvents.map((event) =>
      el(
        "li",
        { class: "event", "data-sequence": String(event.sequence), "data-kind": event.kind },
        [
          `#${event.sequence} ${event.kind}` +
            (event.step_index !== null ? ` step ${event.step_index}` : ""),
        ],
      ),
    );
    return el("section", { class: "feed" }, [el("ol", { class: "events" }, items)]);
  }

  private renderArtifacts(): HTMLElement {
    const items = this.artifacts.map((art) =>
      el(
        "li",
        { class: "artifact", "data-kind": art.kind, "data-id": art.artifact_id },
        [`${art.kind}: ${art.label} (${art.media_type})`],
      ),
    );
    return el("section", { class: "artifacts" }, [el("ul", {}, items)]);
  }
}
