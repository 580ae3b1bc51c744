/** Wire types for the review service JSON API. */

export type Role = "ground_truth" | "prediction";

export type Verdict = "true_negative" | "fn_missing_label" | "fn_annotation_error";

export interface Candidate {
  x: number;
  y: number;
  angle: number;
  opening: number;
  jaw_size: number;
  prediction_id: string;
  confidence: number | null;
}

export interface QueueItem {
  item_id: string;
  image_id: string;
  iteration: number;
  width: number;
  height: number;
  candidate: Candidate | null;
  gt_count: number;
  overlay_url: string;
}

export interface Lease {
  operator: string;
  expires_at: number;
  ttl_seconds: number;
}

export interface QueueCounts {
  pending: number;
  leased: number;
  decided: number;
  total: number;
}

export interface QueueResponse {
  item: QueueItem;
  lease: Lease;
  queue: QueueCounts;
}

export interface OverlayPolygon {
  role: Role;
  corners: [number, number][];
  prediction_id?: string;
}

export interface OverlayData {
  image_id: string;
  width: number;
  height: number;
  image_url: string | null;
  iteration: number;
  polygons: OverlayPolygon[];
}

export interface StatsRow {
  iteration: number;
  false_count: number;
  fn_count: number;
  tn_count: number;
  fn_proportion: number | null;
  labels_added: number;
  images_removed: number;
}

export interface IterationSummary {
  iteration: number;
  labels_added: number;
  images_removed: number;
  tn_count: number;
}

export interface IterationInfo {
  current: number;
  queue: QueueCounts;
  iterations: IterationSummary[];
}

export interface DecisionBody {
  item_id: string;
  verdict: Verdict;
  operator: string;
  token: string;
  candidate?: { prediction_id: string };
}

export interface DecisionAck {
  sequence: number;
  duplicate: boolean;
}
