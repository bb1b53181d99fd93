/** Reconnect delay policy: exponential, capped, reset on success. */

export const BASE_DELAY_MS = 500;
export const MAX_DELAY_MS = 10_000;

export class Backoff {
  private attempt = 0;

  /** Delay before the next reconnect attempt, in milliseconds. */
  next(): number {
    const delay = Math.min(BASE_DELAY_MS * 2 ** this.attempt, MAX_DELAY_MS);
    this.attempt += 1;
    return delay;
  }

  reset(): void {
    this.attempt = 0;
  }
}
