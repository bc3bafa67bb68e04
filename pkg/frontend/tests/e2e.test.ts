/** End-to-end console scenario against a live service instance.
 *
 * Boots the real HTTP service with the scripted model fixture and a pinned
 * clock, then drives the mounted console through the DOM: render the demo
 * plan, post an edit deleting step 3, get the missing_input defect inline,
 * restore, approve, and watch the live feed through session_completed.
 */

import { execFileSync, spawn } from "node:child_process";
import type { ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import type { AddressInfo } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ConsoleClient } from "../src/client.js";
import { OperatorConsole } from "../src/console.js";
import { installDom } from "./dom.js";

const PYTHON = process.env.PYTHON ?? "python3";

function freePort(): Promise<number> {
  return new Promise((resolve) => {
    const probe = createServer();
    probe.listen(0, "127.0.0.1", () => {
      const { port } = probe.address() as AddressInfo;
      probe.close(() => resolve(port));
    });
  });
}

async function waitForService(baseUrl: string, proc: ChildProcess): Promise<void> {
  const deadline = Date.now() + 30000;
  while (Date.now() < deadline) {
    if (proc.exitCode !== null) throw new Error(`service exited: ${proc.exitCode}`);
    try {
      const res = await fetch(`${baseUrl}/sessions`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("service did not come up in 30s");
}

describe("console round-trip against a live service", () => {
  let workDir: string;
  let service: ChildProcess;
  let baseUrl: string;
  let userRequest: string;

  beforeAll(async () => {
    workDir = mkdtempSync(join(tmpdir(), "abflow-console-"));
    const fixture = join(workDir, "fixture.json");
    execFileSync(PYTHON, [
      "-c",
      `from abflow.packs.windfarm.fixtures import write_demo_fixture; write_demo_fixture(${JSON.stringify(fixture)})`,
    ]);
    userRequest = execFileSync(
      PYTHON,
      ["-c", "from abflow.packs.windfarm import USER_REQUEST; print(USER_REQUEST)"],
      { encoding: "utf-8" },
    ).trim();

    const port = await freePort();
    baseUrl = `http://127.0.0.1:${port}`;
    service = spawn(PYTHON, [
      "-m", "abflow.cli", "serve",
      "--data-dir", join(workDir, "data"),
      "--lm-script", fixture,
      "--listen", `127.0.0.1:${port}`,
      "--fixed-clock", "2025-08-09T00:00:00Z",
    ], { stdio: ["ignore", "pipe", "pipe"] });
    service.stderr!.on("data", () => {});
    await waitForService(baseUrl, service);
  });

  afterAll(() => {
    service?.kill();
    rmSync(workDir, { recursive: true, force: true });
  });

  it("edits, recovers from the defect, approves, and follows the run live", async () => {
    const { body } = installDom();
    const client = new ConsoleClient(baseUrl);

    const created = await client.createSession("operator");
    const submitted = await client.sendMessage(created.session_id, userRequest);
    expect(submitted.status).toBe("pending_approval");
    expect(submitted.pending_interrupt?.kind).toBe("plan_approval");

    const console_ = new OperatorConsole(client);
    console_.mount(body);
    await console_.refreshSessions();
    (body.querySelector(
      `button.select[data-session="${created.session_id}"]`,
    ) as HTMLElement).click();
    await console_.whenIdle();

    // golden plan rendered: six steps in capability order, step 2 -> step 5 edge
    const caps = [...body.querySelectorAll("li.step .capability")].map(
      (n) => n.textContent,
    );
    expect(caps).toEqual([
      "time_range_parsing",
      "turbine_data_archiver",
      "weather_data_retrieval",
      "knowledge_retrieval",
      "turbine_analysis",
      "respond",
    ]);
    expect(body.querySelector('li.edge[data-from="2"][data-to="5"]')).not.toBeNull();

    // edit deleting step 3 (weather retrieval) is rejected with an inline defect
    (body.querySelector("button.edit") as HTMLElement).click();
    console_.editBuffer!.deleteStep(3);
    (body.querySelector("button.post-edit") as HTMLElement).click();
    await console_.whenIdle();

    const inline = body.querySelector('.defect[data-kind="missing_input"]');
    expect(inline).not.toBeNull();
    expect(inline!.textContent).toContain("WEATHER_DATA");
    // the pending interrupt is unchanged server-side
    const after = await client.getSession(created.session_id);
    expect(after.pending_interrupt?.interrupt_id).toBe(
      submitted.pending_interrupt!.interrupt_id,
    );
    expect((await client.getPlan(created.session_id)).steps).toHaveLength(6);

    // restore clears the defect display and the buffer
    (body.querySelector("button.restore") as HTMLElement).click();
    expect(body.querySelector(".defect")).toBeNull();
    expect(console_.editBuffer!.dirty).toBe(false);

    // approve, then follow the live feed through to session_completed
    (body.querySelector("button.approve") as HTMLElement).click();
    await console_.whenIdle();
    await console_.monitorDone();

    expect(console_.selected!.status).toBe("completed");
    expect(body.querySelector(".status.terminal")?.textContent).toBe("completed");

    const sequences = console_.feedEvents.map((e) => e.sequence);
    expect(sequences).toEqual(
      Array.from({ length: sequences.length }, (_, i) => i),
    ); // gapless from 0, no duplicates
    expect(console_.feedEvents[console_.feedEvents.length - 1]!.kind).toBe(
      "session_completed",
    );
    const startedSteps = console_.feedEvents
      .filter((e) => e.kind === "step_started")
      .map((e) => e.step_index);
    expect(startedSteps).toEqual([1, 2, 3, 4, 5, 6]);
    expect(body.querySelectorAll("li.event")).toHaveLength(sequences.length);
    expect(
      body.querySelector('li.event[data-kind="session_completed"]'),
    ).not.toBeNull();

    // the run's report artifact is browsable
    const report = console_.artifacts.find((a) => a.kind === "report");
    expect(report).toBeDefined();
    const text = await client.fetchArtifact(report!.artifact_id);
    expect(text).toContain("Wind Farm Maintenance Report");
    expect(text).toContain("T-04");
  });
});
