// Typed client for the community-search service. Every call either returns
// the parsed response body or throws ApiError carrying the server's
// machine-readable code.

export interface GraphViewResponse {
  t: number;
  nodes: string[];
  edges: [string, string][];
  attrs_summary: { attr_dim: number; num_nodes: number; num_edges: number };
  truncated: boolean;
}

export interface QueryResponse {
  members: string[];
  psi: Record<string, number>;
  interaction_index: number;
  eta: number;
  t: number;
}

export interface FeedbackResponse {
  loss_trace: number[];
}

export interface FinalizeResponse {
  meta_update_norm: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parse<T>(res: Response): Promise<T> {
  const body = await res.json().catch(() => ({}));
  if (!res.ok) {
    const err = (body as { error?: { code?: string; message?: string } }).error ?? {};
    throw new ApiError(res.status, err.code ?? "unknown", err.message ?? res.statusText);
  }
  return body as T;
}

export class ServiceClient {
  constructor(private baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async health(): Promise<{ status: string; nodes: number; snapshots: number }> {
    return parse(await fetch(this.url("/health")));
  }

  async graphView(t?: number, center?: string, radius?: number): Promise<GraphViewResponse> {
    const params = new URLSearchParams();
    if (t !== undefined) params.set("t", String(t));
    if (center !== undefined) params.set("center", center);
    if (radius !== undefined) params.set("radius", String(radius));
    const suffix = params.size ? `?${params}` : "";
    return parse(await fetch(this.url(`/graph${suffix}`)));
  }

  async createSession(): Promise<string> {
    const res = await parse<{ session_id: string }>(
      await fetch(this.url("/sessions"), { method: "POST" }),
    );
    return res.session_id;
  }

  async query(sessionId: string, nodeIds: string[], eta?: number): Promise<QueryResponse> {
    return parse(
      await fetch(this.url(`/sessions/${sessionId}/query`), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(eta === undefined ? { node_ids: nodeIds } : { node_ids: nodeIds, eta }),
      }),
    );
  }

  async feedback(
    sessionId: string,
    labels: Record<string, 0 | 1>,
    epochs?: number,
  ): Promise<FeedbackResponse> {
    return parse(
      await fetch(this.url(`/sessions/${sessionId}/feedback`), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(epochs === undefined ? { labels } : { labels, epochs }),
      }),
    );
  }

  async finalize(sessionId: string): Promise<FinalizeResponse> {
    return parse(
      await fetch(this.url(`/sessions/${sessionId}/finalize`), { method: "POST" }),
    );
  }
}
