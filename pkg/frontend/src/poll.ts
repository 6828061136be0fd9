/** Session poller: refreshes the worklist while the loop trains and
 * surfaces network failures as a retry banner instead of dying. */

import type { SessionInfo } from "./types.js";

export interface PollerCallbacks {
  onSession: (info: SessionInfo) => void;
  /** Called with an error message when a poll fails, null when it recovers. */
  onNetworkError: (message: string | null) => void;
}

export interface PollerOptions {
  intervalMs?: number;
  /** Backoff multiplier applied after each consecutive failure. */
  backoff?: number;
  maxIntervalMs?: number;
}

export class SessionPoller {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;
  private failures = 0;
  private readonly intervalMs: number;
  private readonly backoff: number;
  private readonly maxIntervalMs: number;

  constructor(
    private readonly fetchSession: () => Promise<SessionInfo>,
    private readonly callbacks: PollerCallbacks,
    options: PollerOptions = {},
  ) {
    this.intervalMs = options.intervalMs ?? 1000;
    this.backoff = options.backoff ?? 2;
    this.maxIntervalMs = options.maxIntervalMs ?? 15000;
  }

  start(): void {
    this.stopped = false;
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  get currentDelay(): number {
    return Math.min(
      this.intervalMs * Math.pow(this.backoff, this.failures),
      this.maxIntervalMs,
    );
  }

  private async tick(): Promise<void> {
    if (this.stopped) {
      return;
    }
    try {
      const info = await this.fetchSession();
      if (this.failures > 0) {
        this.callbacks.onNetworkError(null); // recovered: clear the banner
      }
      this.failures = 0;
      this.callbacks.onSession(info);
      if (info.phase === "finished" || info.phase === "aborted" || info.phase === "failed") {
        this.stop();
        return;
      }
    } catch (err) {
      this.failures += 1;
      const message = err instanceof Error ? err.message : String(err);
      this.callbacks.onNetworkError(`connection lost (${message}), retrying…`);
    }
    if (!this.stopped) {
      this.timer = setTimeout(() => void this.tick(), this.currentDelay);
    }
  }
}
