// SVG rendering of the graph view. Visual classes come straight from the
// state module, so what is on screen is always derived from the last server
// response plus staged labels.

import { forceLayout, type LayoutNode } from "./layout.js";
import { visualState, type SessionView } from "./state.js";
import type { GraphViewResponse } from "./api.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface GraphCanvas {
  update(view: SessionView): void;
  positions: Map<string, LayoutNode>;
}

export function renderGraph(
  svg: SVGSVGElement,
  graph: GraphViewResponse,
  view: SessionView,
  onNodeClick: (id: string, event: MouseEvent) => void,
): GraphCanvas {
  const width = svg.clientWidth || 800;
  const height = svg.clientHeight || 600;
  svg.innerHTML = "";
  const positions = forceLayout(graph.nodes, graph.edges, width, height);

  const edgeGroup = document.createElementNS(SVG_NS, "g");
  for (const [src, dst] of graph.edges) {
    const a = positions.get(src);
    const b = positions.get(dst);
    if (!a || !b) continue;
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(a.x));
    line.setAttribute("y1", String(a.y));
    line.setAttribute("x2", String(b.x));
    line.setAttribute("y2", String(b.y));
    line.setAttribute("class", "edge");
    edgeGroup.appendChild(line);
  }
  svg.appendChild(edgeGroup);

  const nodeGroup = document.createElementNS(SVG_NS, "g");
  const circles = new Map<string, SVGCircleElement>();
  const psiTitle = new Map<string, SVGTitleElement>();
  for (const id of graph.nodes) {
    const pos = positions.get(id)!;
    const circle = document.createElementNS(SVG_NS, "circle");
    circle.setAttribute("cx", String(pos.x));
    circle.setAttribute("cy", String(pos.y));
    circle.setAttribute("r", "8");
    circle.dataset.node = id;
    circle.addEventListener("click", (event) => onNodeClick(id, event));
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = id;
    circle.appendChild(title);
    nodeGroup.appendChild(circle);
    circles.set(id, circle);
    psiTitle.set(id, title);
  }
  svg.appendChild(nodeGroup);

  function update(view: SessionView): void {
    for (const id of graph.nodes) {
      const circle = circles.get(id)!;
      const state = visualState(view, id);
      circle.setAttribute("class", `node ${state}${view.selection.has(id) ? " selected" : ""}`);
      const psi = view.lastResult?.psi[id];
      psiTitle.get(id)!.textContent = psi === undefined ? id : `${id}  psi=${psi.toFixed(3)}`;
    }
  }

  update(view);
  return { update, positions };
}

export function renderSparkline(canvas: HTMLCanvasElement, losses: number[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (losses.length === 0) return;
  const max = Math.max(...losses, 1e-9);
  ctx.beginPath();
  losses.forEach((loss, i) => {
    const x = (i / Math.max(losses.length - 1, 1)) * (canvas.width - 4) + 2;
    const y = canvas.height - 2 - (loss / max) * (canvas.height - 4);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.strokeStyle = "#2563eb";
  ctx.lineWidth = 1.5;
  ctx.stroke();
}
