/** Thin typed client over the review service API. */

import type {
  DecisionAck,
  DecisionBody,
  IterationInfo,
  OverlayData,
  QueueResponse,
  StatsRow,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** What the session layer needs from the service; ReviewApi is the real one. */
export interface ReviewClient {
  leaseNext(operator: string): Promise<QueueResponse | null>;
  submitDecision(body: DecisionBody): Promise<DecisionAck>;
  overlay(overlayUrl: string): Promise<OverlayData>;
  stats(): Promise<StatsRow[]>;
  iterations(): Promise<IterationInfo>;
}

async function errorOf(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class ReviewApi implements ReviewClient {
  private readonly fetchFn: FetchLike;
  private readonly base: string;

  constructor(fetchFn?: FetchLike, base = "") {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
    this.base = base;
  }

  /** Lease the next pending item; null when the queue is drained (204). */
  async leaseNext(operator: string): Promise<QueueResponse | null> {
    const url = `${this.base}/api/queue/next?operator=${encodeURIComponent(operator)}`;
    const response = await this.fetchFn(url);
    if (response.status === 204) return null;
    if (!response.ok) throw await errorOf(response);
    return (await response.json()) as QueueResponse;
  }

  async submitDecision(body: DecisionBody): Promise<DecisionAck> {
    const response = await this.fetchFn(`${this.base}/api/decisions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await errorOf(response);
    return (await response.json()) as DecisionAck;
  }

  async overlay(overlayUrl: string): Promise<OverlayData> {
    const response = await this.fetchFn(`${this.base}${overlayUrl}`);
    if (!response.ok) throw await errorOf(response);
    return (await response.json()) as OverlayData;
  }

  async stats(): Promise<StatsRow[]> {
    const response = await this.fetchFn(`${this.base}/api/stats`);
    if (!response.ok) throw await errorOf(response);
    return (await response.json()) as StatsRow[];
  }

  async iterations(): Promise<IterationInfo> {
    const response = await this.fetchFn(`${this.base}/api/iterations`);
    if (!response.ok) throw await errorOf(response);
    return (await response.json()) as IterationInfo;
  }
}
