/** Plan view model: step list plus dependency edges recovered from the
 * context-key mapping (an edge producer -> consumer exists exactly when a
 * step's input key matches an earlier step's output key). */

import type { ContextKeyRef, Defect, PlanDoc, PlanStepDoc } from "./types.js";

export class MalformedPlan extends Error {}

export interface DependencyEdge {
  from: number; // producing step index
  to: number; // consuming step index
  key: ContextKeyRef;
}

export interface StepView {
  step: PlanStepDoc;
  /** Input keys with no producing step: satisfied from pre-existing context. */
  externalInputs: ContextKeyRef[];
  defects: Defect[];
}

export interface PlanView {
  planId: string;
  revision: number;
  approved: boolean;
  steps: StepView[];
  edges: DependencyEdge[];
  /** Defects that carry no step index (whole-plan problems). */
  planDefects: Defect[];
}

const keyText = (k: ContextKeyRef) => `${k.type}/${k.key}`;

function checkKeyRef(value: unknown, where: string): ContextKeyRef {
  const k = value as ContextKeyRef;
  if (!k || typeof k.type !== "string" || typeof k.key !== "string") {
    throw new MalformedPlan(`${where}: bad context key reference`);
  }
  return k;
}

function checkStep(value: unknown, position: number): PlanStepDoc {
  const s = value as PlanStepDoc;
  const where = `steps[${position}]`;
  if (!s || typeof s !== "object") throw new MalformedPlan(`${where}: not an object`);
  if (typeof s.index !== "number" || s.index !== position + 1) {
    throw new MalformedPlan(`${where}: index must be ${position + 1}`);
  }
  if (typeof s.capability !== "string" || !s.capability) {
    throw new MalformedPlan(`${where}: missing capability`);
  }
  if (typeof s.objective !== "string") throw new MalformedPlan(`${where}: missing objective`);
  if (!Array.isArray(s.inputs)) throw new MalformedPlan(`${where}: inputs must be a list`);
  s.inputs.forEach((k, i) => checkKeyRef(k, `${where}.inputs[${i}]`));
  checkKeyRef(s.output, `${where}.output`);
  return s;
}

/** Build the view model, or throw MalformedPlan — callers render an error
 * banner instead of a partial plan. */
export function renderPlan(doc: PlanDoc, defects: Defect[] = []): PlanView {
  if (!doc || typeof doc !== "object" || typeof doc.plan_id !== "string") {
    throw new MalformedPlan("document is not a plan");
  }
  if (!Array.isArray(doc.steps) || doc.steps.length === 0) {
    throw new MalformedPlan("plan has no steps");
  }
  const steps = doc.steps.map(checkStep);

  const producers = new Map<string, number>();
  for (const step of steps) {
    const text = keyText(step.output);
    if (producers.has(text)) {
      throw new MalformedPlan(`duplicate output ${text}`);
    }
    producers.set(text, step.index);
  }

  const edges: DependencyEdge[] = [];
  const views: StepView[] = steps.map((step) => {
    const externalInputs: ContextKeyRef[] = [];
    for (const input of step.inputs) {
      const from = producers.get(keyText(input));
      if (from !== undefined && from !== step.index) {
        edges.push({ from, to: step.index, key: input });
      } else if (from === undefined) {
        externalInputs.push(input);
      }
    }
    return { step, externalInputs, defects: [] };
  });

  const planDefects: Defect[] = [];
  for (const defect of defects) {
    const view = defect.step_index === null
      ? undefined
      : views.find((v) => v.step.index === defect.step_index);
    if (view) view.defects.push(defect);
    else planDefects.push(defect);
  }

  return {
    planId: doc.plan_id,
    revision: doc.revision,
    approved: doc.approved,
    steps: views,
    edges,
    planDefects,
  };
}
