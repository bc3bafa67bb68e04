import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { EditBuffer } from "../src/edit.js";
import type { PlanDoc } from "../src/types.js";

const golden: PlanDoc = JSON.parse(
  readFileSync(new URL("./fixtures/golden_plan.json", import.meta.url), "utf-8"),
);

describe("EditBuffer", () => {
  it("starts clean and byte-identical to the fetched document", () => {
    const buffer = new EditBuffer(golden);
    expect(buffer.dirty).toBe(false);
    expect(JSON.stringify(buffer.document())).toBe(JSON.stringify(golden));
  });

  it("deletes a step and reindexes the remainder contiguously", () => {
    const buffer = new EditBuffer(golden);
    buffer.deleteStep(3);
    const doc = buffer.document();
    expect(doc.steps).toHaveLength(5);
    expect(doc.steps.map((s) => s.index)).toEqual([1, 2, 3, 4, 5]);
    expect(doc.steps.map((s) => s.capability)).not.toContain("weather_data_retrieval");
  });

  it("edits objectives without touching anything else", () => {
    const buffer = new EditBuffer(golden);
    buffer.setObjective(1, "Resolve the dates (reviewed).");
    const doc = buffer.document();
    expect(doc.steps[0]!.objective).toBe("Resolve the dates (reviewed).");
    const rest = { ...doc, steps: doc.steps.slice(1) };
    const pristineRest = { ...buffer.pristine, steps: buffer.pristine.steps.slice(1) };
    expect(JSON.stringify(rest)).toBe(JSON.stringify(pristineRest));
  });

  it("reorders steps and rejects out-of-range moves", () => {
    const buffer = new EditBuffer(golden);
    buffer.moveStep(4, 1); // knowledge_retrieval has no inputs, safe anywhere
    const doc = buffer.document();
    expect(doc.steps[0]!.capability).toBe("knowledge_retrieval");
    expect(doc.steps.map((s) => s.index)).toEqual([1, 2, 3, 4, 5, 6]);
    expect(() => buffer.moveStep(1, 99)).toThrow(/out of range/);
  });

  it("restore drops every pending edit", () => {
    const buffer = new EditBuffer(golden);
    buffer.deleteStep(3);
    buffer.setObjective(1, "changed");
    buffer.restore();
    expect(buffer.dirty).toBe(false);
    expect(JSON.stringify(buffer.document())).toBe(JSON.stringify(golden));
  });

  it("attributes outgoing documents to the recorded edits, byte for byte", () => {
    const buffer = new EditBuffer(golden);
    buffer.deleteStep(3);
    const outgoing = buffer.document();
    expect(buffer.attributable(outgoing)).toBe(true);

    // a mutation that did not come from the edit log is not attributable
    const tampered = JSON.parse(JSON.stringify(outgoing)) as PlanDoc;
    tampered.steps[0]!.capability = "ghost_tool";
    expect(buffer.attributable(tampered)).toBe(false);
  });

  it("never mutates the fetched document", () => {
    const before = JSON.stringify(golden);
    const buffer = new EditBuffer(golden);
    buffer.deleteStep(2);
    buffer.setObjective(1, "x");
    buffer.document();
    expect(JSON.stringify(golden)).toBe(before);
    expect(JSON.stringify(buffer.pristine)).toBe(before);
  });
});
