// Wire types and calls for the labeling service. Field names match the JSON payloads.

export type QueryKind = "level" | "preference";

export interface FeatureVector {
  avg_speed: number;
  formation_error: number;
  heading_variance: number;
}

export interface QueryItem {
  trajectory_id: string;
  features: FeatureVector;
  prediction: number;
  target?: FeatureVector;
}

export interface QueryDescriptor {
  query_id: string;
  kind: QueryKind;
  items: QueryItem[];
}

export interface QueryResponse {
  revision: number;
  query: QueryDescriptor;
}

export type LabelPayload = { kind: "level"; level: number } | { kind: "preference"; label: [number, number] };

export interface PoolSizes {
  levels: number;
  preferences: number;
}

export interface LabelAck {
  revision: number;
  pools: PoolSizes;
}

export interface RetrainResponse {
  revision: number;
  task: "a" | "b";
  final_loss: number;
  queued: boolean;
}

export interface Metrics {
  revision: number;
  level_accuracy: number | null;
  preference_accuracy: number | null;
  histogram: { one: number; half: number; zero: number };
  sample_count: number;
  pools: PoolSizes;
  trained: boolean;
  demarcations: number[];
}

export interface RobotState {
  position: [number, number, number];
  velocity: [number, number, number];
  orientation: [number, number, number];
}

export interface TrajectoryPayload {
  revision: number;
  id: string;
  team_size: number;
  dt: number;
  targets: [number, number, number][];
  steps: RobotState[][];
}

export interface ErrorBody {
  revision: number;
  error: string;
  message: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ErrorBody | null,
    message: string,
  ) {
    super(message);
  }

  get code(): string | null {
    return this.body?.error ?? null;
  }
}

async function call<T>(path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(path, init);
  const text = await resp.text();
  if (!resp.ok) {
    let body: ErrorBody | null = null;
    try {
      body = JSON.parse(text) as ErrorBody;
    } catch {
      // Non-JSON error page.
    }
    throw new ApiError(resp.status, body, body?.message ?? `${resp.status} ${text}`);
  }
  return JSON.parse(text) as T;
}

function post<T>(path: string, body: unknown): Promise<T> {
  return call<T>(path, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
}

export const api = {
  query: (kind: QueryKind) => call<QueryResponse>(`/api/query?kind=${kind}`),
  label: (query_id: string, payload: LabelPayload) =>
    post<LabelAck>("/api/label", { query_id, payload, rater: "human", timestamp: Math.floor(Date.now() / 1000) }),
  retrain: (task: "a" | "b") => post<RetrainResponse>("/api/retrain", { task }),
  metrics: () => call<Metrics>("/api/metrics"),
  trajectory: (id: string) => call<TrajectoryPayload>(`/api/trajectory/${encodeURIComponent(id)}`),
};

/// Rejects payloads that would render partially.
export function checkTrajectory(t: TrajectoryPayload): void {
  if (!Array.isArray(t.steps) || t.steps.length === 0) throw new Error(`trajectory ${t.id}: no steps`);
  for (const s of t.steps) {
    if (!Array.isArray(s) || s.length !== t.team_size) throw new Error(`trajectory ${t.id}: step size mismatch`);
  }
}
