/** Form-based plan edit buffer.
 *
 * The buffer never mutates the fetched document. It records operations
 * (objective text, step deletion, reorder) and derives the outgoing document
 * by replaying them against a pristine copy, so the document it posts is
 * exactly (fetched document + recorded edits) and nothing else.
 */

import type { PlanDoc, PlanStepDoc } from "./types.js";

export type EditOp =
  | { op: "set_objective"; index: number; objective: string }
  | { op: "delete_step"; index: number }
  | { op: "move_step"; from: number; to: number };

function reindex(steps: PlanStepDoc[]): PlanStepDoc[] {
  return steps.map((s, i) => ({ ...s, index: i + 1 }));
}

function apply(doc: PlanDoc, op: EditOp): PlanDoc {
  const steps = doc.steps.map((s) => ({ ...s }));
  switch (op.op) {
    case "set_objective": {
      const step = steps.find((s) => s.index === op.index);
      if (!step) throw new Error(`no step ${op.index}`);
      step.objective = op.objective;
      return { ...doc, steps };
    }
    case "delete_step": {
      const at = steps.findIndex((s) => s.index === op.index);
      if (at < 0) throw new Error(`no step ${op.index}`);
      steps.splice(at, 1);
      return { ...doc, steps: reindex(steps) };
    }
    case "move_step": {
      const at = steps.findIndex((s) => s.index === op.from);
      if (at < 0) throw new Error(`no step ${op.from}`);
      const [step] = steps.splice(at, 1);
      steps.splice(op.to - 1, 0, step!);
      return { ...doc, steps: reindex(steps) };
    }
  }
}

export class EditBuffer {
  private pristineText: string;
  private ops: EditOp[] = [];

  constructor(fetched: PlanDoc) {
    this.pristineText = JSON.stringify(fetched);
  }

  get pristine(): PlanDoc {
    return JSON.parse(this.pristineText) as PlanDoc;
  }

  get edits(): EditOp[] {
    return [...this.ops];
  }

  get dirty(): boolean {
    return this.ops.length > 0;
  }

  setObjective(index: number, objective: string): void {
    this.ops.push({ op: "set_objective", index, objective });
  }

  deleteStep(index: number): void {
    this.ops.push({ op: "delete_step", index });
  }

  moveStep(from: number, to: number): void {
    if (to < 1 || to > this.document().steps.length) {
      throw new Error(`move target ${to} out of range`);
    }
    this.ops.push({ op: "move_step", from, to });
  }

  /** Drop all pending edits, returning to the fetched document. */
  restore(): void {
    this.ops = [];
  }

  /** The document to post: pristine copy with the recorded edits replayed. */
  document(): PlanDoc {
    return this.ops.reduce(apply, this.pristine);
  }

  /** Every byte of difference from the fetched document must be attributable
   * to a recorded edit; replaying the edit log onto a fresh pristine parse
   * reproduces the outgoing document exactly. */
  attributable(outgoing: PlanDoc): boolean {
    return JSON.stringify(outgoing) === JSON.stringify(this.document());
  }
}
