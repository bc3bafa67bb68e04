/** Install a happy-dom window as the global document for DOM-driving tests,
 * while keeping node's native fetch for real network access. */

import { Window } from "happy-dom";

export function installDom(): { window: Window; body: HTMLElement } {
  const window = new Window();
  const g = globalThis as Record<string, unknown>;
  g.document = window.document;
  g.HTMLElement = window.HTMLElement;
  g.Node = window.Node;
  return { window, body: window.document.body as unknown as HTMLElement };
}
