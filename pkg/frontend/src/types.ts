// Wire payloads of the gateway API.

export type EventKind = "text" | "select" | "confirm" | "deny";

export interface GatewayEventPayload {
  kind: EventKind;
  text?: string;
  options?: string[];
}

export interface FigurePoint {
  model: string;
  value: number; // normalized to [0, 1] server-side
  raw: number;
}

export interface FigureSeries {
  criterion: string;
  points: FigurePoint[];
}

export interface FigurePayload {
  kind: string;
  normalization: string;
  series: FigureSeries[];
}

export interface ReportPayload {
  models: string[];
  criteria: string[];
  cells: Record<string, Record<string, number>>;
  per_criterion_rank: Record<string, Record<string, number>>;
  overall_rank: Record<string, number>;
  figure: FigurePayload;
}

export type ReplyKind =
  | "prompt"
  | "choices"
  | "job_launched"
  | "job_finished"
  | "report"
  | "error";

export interface GatewayReplyPayload {
  kind: ReplyKind;
  text?: string;
  options?: string[];
  job_id?: string;
  report?: ReportPayload;
}

export interface JobPayload {
  job_id: string;
  model: string;
  benchmarks: string[];
  data_parallel: number;
  state: string;
  failure_reason: string | null;
  submitted_at: string;
  finished_at: string | null;
}
