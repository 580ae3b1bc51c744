/** Review session state machine: one leased item, one decision, advance. */

import { ApiError } from "./api.js";
import type { ReviewClient } from "./api.js";
import type { DecisionAck, DecisionBody, QueueResponse, Verdict } from "./types.js";

export type Screen = "idle" | "reviewing" | "complete";

export type SubmitOutcome = "committed" | "blocked" | "rejected" | "conflict" | "failed";

export interface SessionOptions {
  tokenFn?: () => string;
  now?: () => number;
  onChange?: () => void;
}

function defaultToken(): string {
  const rand = Math.random().toString(36).slice(2, 10);
  return `tok-${Date.now().toString(36)}-${rand}`;
}

export const KEY_BINDINGS: Record<string, Verdict | "skip"> = {
  "1": "true_negative",
  "2": "fn_missing_label",
  "3": "fn_annotation_error",
  " ": "skip",
};

export class ReviewSession {
  readonly api: ReviewClient;
  operator = "";
  screen: Screen = "idle";
  current: QueueResponse | null = null;
  token: string | null = null;
  busy = false;
  /** inline validation / network message; cleared on the next action */
  notice: string | null = null;
  /** 409 banner text; the session already reloaded when this is set */
  conflict: string | null = null;
  decided = 0;
  skipped = 0;
  lastAck: DecisionAck | null = null;

  private readonly tokenFn: () => string;
  private readonly now: () => number;
  private readonly onChange: () => void;

  constructor(api: ReviewClient, options: SessionOptions = {}) {
    this.api = api;
    this.tokenFn = options.tokenFn ?? defaultToken;
    this.now = options.now ?? (() => Date.now());
    this.onChange = options.onChange ?? (() => undefined);
  }

  keyVerdict(key: string): Verdict | "skip" | null {
    return KEY_BINDINGS[key] ?? null;
  }

  /** Seconds until the current lease lapses; 0 with no active item. */
  leaseRemaining(): number {
    if (!this.current) return 0;
    return this.current.lease.expires_at - this.now() / 1000;
  }

  expired(): boolean {
    return this.current !== null && this.leaseRemaining() <= 0;
  }

  canSubmit(verdict: Verdict): boolean {
    if (this.screen !== "reviewing" || this.current === null || this.busy) return false;
    if (this.expired()) return false;
    if (verdict === "fn_missing_label" && this.current.item.candidate === null) return false;
    return true;
  }

  async start(operator: string): Promise<void> {
    this.operator = operator.trim();
    this.decided = 0;
    this.skipped = 0;
    this.notice = null;
    this.conflict = null;
    await this.leaseNext();
  }

  /**
   * Commit a verdict on the leased item. Exactly one POST per call; while a
   * POST is in flight every further submit is "blocked", and the per-lease
   * token makes any retry after a network failure idempotent server-side.
   */
  async submit(verdict: Verdict): Promise<SubmitOutcome> {
    if (!this.canSubmit(verdict)) return "blocked";
    const item = this.current!.item;
    const body: DecisionBody = {
      item_id: item.item_id,
      verdict,
      operator: this.operator,
      token: this.token!,
    };
    if (verdict === "fn_missing_label" && item.candidate !== null) {
      body.candidate = { prediction_id: item.candidate.prediction_id };
    }
    this.busy = true;
    this.notice = null;
    this.conflict = null;
    this.onChange();
    try {
      const ack = await this.api.submitDecision(body);
      this.lastAck = ack;
      this.decided += 1;
      this.busy = false;
      await this.leaseNext();
      return "committed";
    } catch (error) {
      this.busy = false;
      if (error instanceof ApiError && (error.status === 409 || error.status === 404)) {
        // somebody else (or an expired lease) got there first: show and reload
        this.conflict = error.detail;
        await this.leaseNext();
        return "conflict";
      }
      if (error instanceof ApiError && error.status === 422) {
        this.notice = error.detail;
        this.onChange();
        return "rejected";
      }
      this.notice = error instanceof Error ? error.message : String(error);
      this.onChange();
      return "failed";
    }
  }

  /** Abandon the current item without deciding; its lease lapses server-side. */
  async skip(): Promise<"skipped" | "blocked"> {
    if (this.screen !== "reviewing" || this.current === null || this.busy) return "blocked";
    this.busy = true;
    this.skipped += 1;
    try {
      await this.leaseNext();
    } finally {
      this.busy = false;
      this.onChange();
    }
    return "skipped";
  }

  /** Re-lease after expiry (the expired item returns to pending lazily). */
  async reload(): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    try {
      await this.leaseNext();
    } finally {
      this.busy = false;
      this.onChange();
    }
  }

  async leaseNext(): Promise<void> {
    const response = await this.api.leaseNext(this.operator);
    if (response === null) {
      this.screen = "complete";
      this.current = null;
      this.token = null;
    } else {
      this.screen = "reviewing";
      this.current = response;
      this.token = this.tokenFn();
    }
    this.onChange();
  }
}
