/** Typed wrappers for the /api endpoints. The console computes no physics:
 * every displayed number comes from these responses. */

export interface Metrics {
  barrier_meV: number;
  heightVar_um: number;
  barrierPos_um: number[];
}

export interface TraceData {
  s_um: number[];
  x_um: number[];
  y_um: number[];
  z_um: number[];
  psi_meV: number[];
}

export interface MapData {
  x_um: number[];
  z_um: number[];
  psi_meV: number[][];
}

export interface EvaluateResponse {
  layout_hash: string;
  metrics: Metrics;
  trace: TraceData;
  map: MapData;
}

export interface GroupsResponse {
  layout_hash: string;
  mode: string;
  classes: string[][];
  groups: string[];
}

export interface LayoutElectrode {
  id: number;
  group: string;
  role: string;
  polygon: number[][];
}

export interface LayoutResponse {
  layout_hash: string;
  layout: { electrodes: LayoutElectrode[]; variant: string };
}

export interface JobStatus {
  layout_hash: string;
  status: "running" | "done" | "failed";
  convergence: number[];
  result?: {
    bestAmplitudes: Record<string, number>;
    barrier_meV: number;
    heightVar_um: number;
    evaluations: number;
    seed: number;
  };
  error?: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function request<T>(fetcher: FetchLike, url: string, init?: RequestInit): Promise<T> {
  const resp = await fetcher(url, init);
  if (!resp.ok) {
    let detail = `${resp.status}`;
    try {
      const body = await resp.json();
      detail = body.detail ?? detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class Api {
  constructor(private fetcher: FetchLike = fetch.bind(globalThis)) {}

  layout(): Promise<LayoutResponse> {
    return request(this.fetcher, "/api/layout");
  }

  groups(mode: string): Promise<GroupsResponse> {
    return request(this.fetcher, `/api/groups?mode=${encodeURIComponent(mode)}`);
  }

  evaluate(body: {
    amplitudes: Record<string, number>;
    mode: string;
    grid?: unknown;
    trace_range_um?: [number, number];
    trace_step_um?: number;
  }): Promise<EvaluateResponse> {
    return request(this.fetcher, "/api/evaluate", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  submitOptimize(body: {
    mode: string;
    restarts?: number;
    max_evals?: number;
    seed?: number;
  }): Promise<{ job_id: string }> {
    return request(this.fetcher, "/api/optimize", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  jobStatus(id: string): Promise<JobStatus> {
    return request(this.fetcher, `/api/jobs/${id}`);
  }
}
