export { ConsoleClient, ServiceError } from "./client.js";
export type { ReviseResult } from "./client.js";
export { EditBuffer } from "./edit.js";
export type { EditOp } from "./edit.js";
export { EventFeed, parseFrames } from "./feed.js";
export type { FeedOptions } from "./feed.js";
export { MalformedPlan, renderPlan } from "./plan.js";
export type { DependencyEdge, PlanView, StepView } from "./plan.js";
export { OperatorConsole } from "./console.js";
export * from "./types.js";
