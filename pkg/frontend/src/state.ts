/** Console state: inputs, result cache, history, and staleness tracking.
 * Pure data + logic so every rule here is unit-testable without a DOM. */

import type { HistoryEntry, Mode, SearchResponse } from "./types.js";

export const HISTORY_CAP = 50;
export const DEBOUNCE_MS = 300;

export function clampAlpha(value: number): number {
  if (Number.isNaN(value)) return 0;
  return Math.min(1, Math.max(-1, value));
}

export class ConsoleState {
  text = "";
  imageRef = ""; // URL, or a label for an uploaded file
  imageB64: string | null = null;
  alpha = 0;
  k = 12;
  lastResponse: SearchResponse | null = null;
  history: HistoryEntry[] = [];

  private issued = 0;
  private applied = 0;

  setAlpha(value: number): void {
    this.alpha = clampAlpha(value);
  }

  hasImage(): boolean {
    return this.imageB64 !== null || this.imageRef.trim() !== "";
  }

  hasText(): boolean {
    return this.text.trim() !== "";
  }

  /** Multimodal submit stays disabled until both inputs are present. */
  canSubmit(mode: Mode): boolean {
    if (mode === "text") return this.hasText();
    if (mode === "image") return this.hasImage();
    return this.hasText() && this.hasImage();
  }

  /** Sequence number for a new in-flight request. */
  nextSequence(): number {
    return ++this.issued;
  }

  /** Accept a response only if nothing newer has already been applied;
   * superseded responses are discarded. */
  acceptResponse(sequence: number, mode: Mode, response: SearchResponse): boolean {
    if (sequence <= this.applied) {
      return false;
    }
    this.applied = sequence;
    this.lastResponse = response;
    this.pushHistory({
      mode,
      text: this.text,
      imageRef: this.imageRef,
      alpha: this.alpha,
      k: this.k,
      response,
    });
    return true;
  }

  private pushHistory(entry: HistoryEntry): void {
    this.history.push(entry);
    if (this.history.length > HISTORY_CAP) {
      this.history.splice(0, this.history.length - HISTORY_CAP);
    }
  }

  /** Step back in history, restoring cached results without a re-query.
   * Returns the restored entry, or null at the beginning. */
  back(): HistoryEntry | null {
    if (this.history.length < 2) return null;
    this.history.pop();
    const entry = this.history[this.history.length - 1];
    this.text = entry.text;
    this.imageRef = entry.imageRef;
    this.alpha = entry.alpha;
    this.k = entry.k;
    this.lastResponse = entry.response;
    return entry;
  }

  /** One-click refinement: reuse a result as the next image query. */
  useAsImageQuery(iiifUrl: string): void {
    this.imageRef = iiifUrl;
    this.imageB64 = null;
  }
}

/** Trailing debounce with an injectable clock for tests. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number = DEBOUNCE_MS,
  setTimer: (cb: () => void, ms: number) => ReturnType<typeof setTimeout> = setTimeout,
  clearTimer: (id: ReturnType<typeof setTimeout>) => void = clearTimeout,
): (...args: A) => void {
  let pending: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (pending !== null) clearTimer(pending);
    pending = setTimer(() => {
      pending = null;
      fn(...args);
    }, waitMs);
  };
}
