// Console wiring: one session against the service, the select -> query ->
// label -> refine -> finalize loop, and an optional ground-truth overlay for
// live F1 readout.

import { ApiError, ServiceClient, type GraphViewResponse } from "./api.js";
import { renderGraph, renderSparkline, type GraphCanvas } from "./render.js";
import {
  applyFeedbackResponse,
  applyQueryResponse,
  canSubmitFeedback,
  canSubmitQuery,
  cycleLabel,
  f1Against,
  freshSession,
  markFinalized,
  stagedLabelPayload,
  toggleSelection,
  type SessionView,
} from "./state.js";

const client = new ServiceClient("");
let view: SessionView = freshSession();
let canvas: GraphCanvas | null = null;
let graph: GraphViewResponse | null = null;
let truth: Set<string> | null = null;
let labelMode = false;
let busy = false;

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

function toast(message: string): void {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.classList.add("visible");
  setTimeout(() => box.classList.remove("visible"), 4000);
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return `[${err.code}] ${err.message}`;
  return String(err);
}

function refreshControls(): void {
  el<HTMLButtonElement>("find").disabled = busy || !canSubmitQuery(view);
  el<HTMLButtonElement>("refine").disabled = busy || !canSubmitFeedback(view);
  el<HTMLButtonElement>("finalize").disabled = busy || view.sessionId === null || view.finalized;
  el<HTMLSpanElement>("selection-badge").textContent = String(view.selection.size);
  el<HTMLSpanElement>("staged-badge").textContent = String(view.pendingLabels.size);
  el<HTMLSpanElement>("interaction").textContent = String(view.interactionIndex);
  el<HTMLButtonElement>("label-mode").classList.toggle("active", labelMode);
  const result = el<HTMLDivElement>("result");
  if (view.lastResult) {
    const f1 = truth ? `  F1 vs overlay: ${f1Against(view, truth).toFixed(3)}` : "";
    result.textContent =
      `community of ${view.lastResult.members.length} nodes at eta=${view.lastResult.eta}` + f1;
  }
  canvas?.update(view);
  renderSparkline(el<HTMLCanvasElement>("sparkline"), view.lossHistory);
}

async function guard(action: () => Promise<void>): Promise<void> {
  if (busy) return;
  busy = true;
  refreshControls();
  try {
    await action();
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      toast(`${describeError(err)} - starting a new session`);
      view = freshSession(view.eta);
      view.sessionId = await client.createSession().catch(() => null as never);
    } else {
      toast(describeError(err));
    }
  } finally {
    busy = false;
    refreshControls();
  }
}

function onNodeClick(id: string): void {
  if (labelMode) {
    cycleLabel(view, id);
  } else {
    toggleSelection(view, id);
  }
  refreshControls();
}

async function runQuery(): Promise<void> {
  const eta = Number(el<HTMLInputElement>("eta").value);
  const response = await client.query(view.sessionId!, [...view.selection], eta);
  applyQueryResponse(view, response);
}

async function boot(): Promise<void> {
  const health = await client.health();
  el<HTMLSpanElement>("status").textContent =
    `ready: ${health.nodes} nodes, ${health.snapshots} snapshots`;
  graph = await client.graphView();
  view.sessionId = await client.createSession();
  canvas = renderGraph(el<HTMLElement>("graph") as unknown as SVGSVGElement, graph, view, onNodeClick);
  refreshControls();
}

el<HTMLButtonElement>("find").addEventListener("click", () => guard(runQuery));

el<HTMLButtonElement>("label-mode").addEventListener("click", () => {
  labelMode = !labelMode;
  refreshControls();
});

el<HTMLButtonElement>("refine").addEventListener("click", () =>
  guard(async () => {
    const epochs = Number(el<HTMLInputElement>("epochs").value) || 5;
    const response = await client.feedback(view.sessionId!, stagedLabelPayload(view), epochs);
    applyFeedbackResponse(view, response.loss_trace);
    await runQuery(); // re-run the last query so the display reflects the refined model
  }),
);

el<HTMLButtonElement>("finalize").addEventListener("click", () =>
  guard(async () => {
    const response = await client.finalize(view.sessionId!);
    markFinalized(view);
    toast(`session folded into meta-model (update norm ${response.meta_update_norm.toFixed(4)})`);
  }),
);

el<HTMLInputElement>("eta").addEventListener("change", () => {
  el<HTMLSpanElement>("eta-value").textContent = el<HTMLInputElement>("eta").value;
  if (view.lastResult && !view.finalized) guard(runQuery);
});

el<HTMLInputElement>("overlay").addEventListener("change", async (event) => {
  const file = (event.target as HTMLInputElement).files?.[0];
  if (!file) return;
  const text = await file.text();
  truth = new Set(text.split(/\s+/).filter(Boolean));
  refreshControls();
});

boot().catch((err) => {
  el<HTMLSpanElement>("status").textContent = describeError(err);
});
