export type Phase =
  | "training"
  | "awaiting"
  | "finished"
  | "aborted"
  | "failed";

export interface SessionInfo {
  iteration: number;
  labeled_count: number;
  pending_ids: number[];
  phase: Phase;
}

export interface SuggestionInfo {
  id: number;
  distance: number | null;
  cosine: number | null;
  fallback: boolean;
}

export interface DatasetInfo {
  height: number;
  width: number;
  n_classes: number;
  m: number;
  n_iterations: number;
}

export interface MetricsRow {
  iteration: number;
  labeled_count: number;
  mean_dice: number;
  std_dice: number;
}

export interface Metrics {
  rows: MetricsRow[];
  [key: string]: unknown;
}
