// Pure session/view state. Everything rendered is derived from the last
// server response plus locally staged input; nothing here talks to the
// network or the DOM, so the whole loop is unit-testable.

import type { QueryResponse } from "./api.js";

export type VisualState = "plain" | "query" | "member" | "labeled-in" | "labeled-out";

export interface SessionView {
  sessionId: string | null;
  interactionIndex: number;
  selection: Set<string>;
  lastQuery: string[] | null;
  lastResult: QueryResponse | null;
  pendingLabels: Map<string, 0 | 1>;
  lossHistory: number[];
  eta: number;
  finalized: boolean;
}

export function freshSession(eta = 0.5): SessionView {
  return {
    sessionId: null,
    interactionIndex: 0,
    selection: new Set(),
    lastQuery: null,
    lastResult: null,
    pendingLabels: new Map(),
    lossHistory: [],
    eta,
    finalized: false,
  };
}

export function toggleSelection(view: SessionView, node: string): void {
  if (view.finalized) return;
  if (view.selection.has(node)) {
    view.selection.delete(node);
  } else {
    view.selection.add(node);
  }
}

export function canSubmitQuery(view: SessionView): boolean {
  return view.selection.size > 0 && !view.finalized;
}

export function canSubmitFeedback(view: SessionView): boolean {
  return view.pendingLabels.size > 0 && view.lastResult !== null && !view.finalized;
}

export function applyQueryResponse(view: SessionView, response: QueryResponse): void {
  view.lastQuery = [...view.selection].sort();
  view.lastResult = response;
  view.interactionIndex = response.interaction_index;
  view.eta = response.eta;
}

// Staging cycles per node: unlabeled -> in (1) -> out (0) -> unlabeled.
// Query nodes are members by definition and cannot be relabeled.
export function cycleLabel(view: SessionView, node: string): void {
  if (view.finalized || view.lastResult === null) return;
  if (view.lastQuery?.includes(node)) return;
  const current = view.pendingLabels.get(node);
  if (current === undefined) {
    view.pendingLabels.set(node, 1);
  } else if (current === 1) {
    view.pendingLabels.set(node, 0);
  } else {
    view.pendingLabels.delete(node);
  }
}

export function stagedLabelPayload(view: SessionView): Record<string, 0 | 1> {
  return Object.fromEntries(view.pendingLabels);
}

export function applyFeedbackResponse(view: SessionView, lossTrace: number[]): void {
  view.lossHistory.push(...lossTrace);
  view.pendingLabels.clear();
}

export function markFinalized(view: SessionView): void {
  view.finalized = true;
  view.selection.clear();
  view.pendingLabels.clear();
}

// One visual state per node. Query styling layers over member styling;
// staged labels show on top of plain membership.
export function visualState(view: SessionView, node: string): VisualState {
  if (view.lastResult !== null && view.lastQuery?.includes(node)) return "query";
  const staged = view.pendingLabels.get(node);
  if (staged === 1) return "labeled-in";
  if (staged === 0) return "labeled-out";
  if (view.lastResult?.members.includes(node)) return "member";
  return "plain";
}

export function renderedMembers(view: SessionView): string[] {
  return view.lastResult ? [...view.lastResult.members] : [];
}

// Rendered membership must be traceable to the last server response.
export function membershipMatchesResponse(view: SessionView, response: QueryResponse): boolean {
  const rendered = new Set(renderedMembers(view));
  return (
    rendered.size === response.members.length &&
    response.members.every((m) => rendered.has(m))
  );
}

export function f1Against(view: SessionView, truth: Set<string>): number {
  const found = renderedMembers(view);
  if (found.length === 0 || truth.size === 0) return 0;
  const overlap = found.filter((m) => truth.has(m)).length;
  if (overlap === 0) return 0;
  const precision = overlap / found.length;
  const recall = overlap / truth.size;
  return (2 * precision * recall) / (precision + recall);
}
