/**
 * Typed client for the cleaning-session HTTP API.
 *
 * Model vectors travel as nested lists of repr strings so they survive
 * JSON bit-exactly; everything else is plain JSON. The UI never computes
 * model quantities itself, it only relays what these endpoints return.
 */

export type ThetaWire = string[] | ThetaWire[];

export interface DetectionHint {
  is_dirty: boolean;
  corrupted_features: number[];
  corrupted_labels: number[];
  error_class: number;
}

export interface BatchRecord {
  id: number;
  x: number[];
  y: number[];
  probability: number;
  hint: DetectionHint;
}

export interface BatchDoc {
  session_id: string;
  t: number;
  census: boolean;
  records: BatchRecord[];
  draw_ids: number[];
}

export interface HistoryPointDoc {
  t: number;
  records_cleaned: number;
  training_loss: number;
  test_accuracy: number | null;
  rel_model_error: number | null;
  wall_ms: number;
  theta: ThetaWire;
}

export interface ProgressDoc {
  session_id: string;
  status: string;
  d: number;
  n: number;
  n_dirty: number;
  n_clean: number;
  budget_remaining: number;
  records_cleaned: number;
  t: number;
  training_loss: number;
  detector_accuracy: number | null;
  pending_ids: number[] | null;
  theta: ThetaWire;
  theta0: ThetaWire;
  history: HistoryPointDoc[];
  plan_kind: string;
  detector_mode: string;
  batch_size: number;
  budget: number;
}

export interface CreateDoc {
  session_id: string;
  status: string;
  d: number;
  n: number;
  n_dirty: number;
  budget_remaining: number;
  strategy: string;
  theta: ThetaWire;
}

export interface SubmitDoc {
  session_id: string;
  status: string;
  budget_remaining: number;
  records_cleaned: number;
  n_dirty: number;
  n_clean: number;
  history_point: HistoryPointDoc;
  theta: ThetaWire;
}

export interface ConfigDoc {
  session_id: string;
  status: string;
  batch_size: number;
  margin_threshold: number;
}

export interface RepairEntry {
  id: number;
  x: number[];
  y: number[];
  error_class: number;
}

/** Non-2xx response, with the service's detail string. */
export class ApiError extends Error {
  status: number;
  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const res = await fetch(url, init);
  const body = await res.json().catch(() => ({}));
  if (!res.ok) {
    const detail = typeof body?.detail === "string" ? body.detail : res.statusText;
    throw new ApiError(res.status, detail);
  }
  return body as T;
}

function post(payload: unknown): RequestInit {
  return {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
  };
}

export class Api {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  createSession(payload: {
    dataset_path?: string;
    dataset_csv?: string;
    config: Record<string, unknown>;
  }): Promise<CreateDoc> {
    return request<CreateDoc>(this.url("/sessions"), post(payload));
  }

  progress(sessionId: string): Promise<ProgressDoc> {
    return request<ProgressDoc>(this.url(`/sessions/${sessionId}`));
  }

  nextBatch(sessionId: string): Promise<BatchDoc> {
    return request<BatchDoc>(this.url(`/sessions/${sessionId}/batch`));
  }

  submitRepairs(sessionId: string, repairs: RepairEntry[]): Promise<SubmitDoc> {
    return request<SubmitDoc>(this.url(`/sessions/${sessionId}/clean`), post({ repairs }));
  }

  updateConfig(
    sessionId: string,
    changes: { batch_size?: number; margin_threshold?: number },
  ): Promise<ConfigDoc> {
    return request<ConfigDoc>(this.url(`/sessions/${sessionId}/config`), post(changes));
  }

  stop(sessionId: string): Promise<ConfigDoc> {
    return request<ConfigDoc>(this.url(`/sessions/${sessionId}/config`), post({ stop: true }));
  }
}
