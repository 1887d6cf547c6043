// Small force-directed layout: spring forces along edges, pairwise
// repulsion, and centering. Deterministic given the node order.

export interface LayoutNode {
  id: string;
  x: number;
  y: number;
  vx: number;
  vy: number;
}

export function forceLayout(
  nodeIds: string[],
  edges: [string, string][],
  width: number,
  height: number,
  iterations = 150,
): Map<string, LayoutNode> {
  const nodes = new Map<string, LayoutNode>();
  const n = nodeIds.length;
  nodeIds.forEach((id, i) => {
    const angle = (2 * Math.PI * i) / Math.max(n, 1);
    const radius = Math.min(width, height) * 0.35;
    nodes.set(id, {
      id,
      x: width / 2 + radius * Math.cos(angle),
      y: height / 2 + radius * Math.sin(angle),
      vx: 0,
      vy: 0,
    });
  });

  const springLength = Math.min(width, height) / Math.max(3, Math.sqrt(n));
  const repulsion = springLength * springLength;
  const list = [...nodes.values()];

  for (let step = 0; step < iterations; step++) {
    const cooling = 1 - step / iterations;
    for (let i = 0; i < list.length; i++) {
      for (let j = i + 1; j < list.length; j++) {
        const a = list[i];
        const b = list[j];
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        const d2 = Math.max(dx * dx + dy * dy, 1);
        const f = repulsion / d2;
        const d = Math.sqrt(d2);
        dx /= d;
        dy /= d;
        a.vx += dx * f;
        a.vy += dy * f;
        b.vx -= dx * f;
        b.vy -= dy * f;
      }
    }
    for (const [src, dst] of edges) {
      const a = nodes.get(src);
      const b = nodes.get(dst);
      if (!a || !b) continue;
      const dx = b.x - a.x;
      const dy = b.y - a.y;
      const d = Math.max(Math.sqrt(dx * dx + dy * dy), 1);
      const f = (d - springLength) * 0.05;
      a.vx += (dx / d) * f;
      a.vy += (dy / d) * f;
      b.vx -= (dx / d) * f;
      b.vy -= (dy / d) * f;
    }
    for (const node of list) {
      node.vx += (width / 2 - node.x) * 0.005;
      node.vy += (height / 2 - node.y) * 0.005;
      node.x += node.vx * 0.1 * cooling;
      node.y += node.vy * 0.1 * cooling;
      node.vx *= 0.6;
      node.vy *= 0.6;
      node.x = Math.min(Math.max(node.x, 10), width - 10);
      node.y = Math.min(Math.max(node.y, 10), height - 10);
    }
  }
  return nodes;
}
