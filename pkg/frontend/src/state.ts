/** Console state: channel sliders, per-class overrides, sequence-numbered
 * evaluation results. Pure logic, no DOM. */

import type { EvaluateResponse, Metrics } from "./api.js";

export const MAX_CHANNELS = 4;
export const VOLTS_MIN = 0;
export const VOLTS_MAX = 200;
export const DEBOUNCE_MS = 150;

export interface StateSnapshot {
  mode: "corner" | "linear";
  channelVolts: number[];
  metrics: Metrics | null;
  pending: boolean;
  banner: string | null;
}

export class ConsoleState {
  mode: "corner" | "linear" = "corner";
  /** tie classes for the current mode (group labels per class) */
  classes: string[][] = [];
  /** channel index (0-based) per tie class */
  classChannel: number[] = [];
  channelVolts: number[] = [100, 100, 100, 100];
  /** advanced per-class amplitude overrides (class index -> volts) */
  overrides = new Map<number, number>();
  metrics: Metrics | null = null;
  lastResponse: EvaluateResponse | null = null;
  banner: string | null = null;
  pending = false;

  private nextSeq = 0;
  private appliedSeq = -1;

  setClasses(classes: string[][]): void {
    this.classes = classes;
    // default wiring: spread classes across the four channels in order, so
    // every slider drives something visible from the start
    this.classChannel = classes.map((_c, i) => i % MAX_CHANNELS);
    this.overrides.clear();
  }

  setChannel(channel: number, volts: number): void {
    if (channel < 0 || channel >= MAX_CHANNELS) {
      throw new RangeError(`channel ${channel} out of range`);
    }
    this.channelVolts[channel] = clampVolts(volts);
  }

  setOverride(classIndex: number, volts: number | null): void {
    if (volts === null) {
      this.overrides.delete(classIndex);
    } else {
      this.overrides.set(classIndex, clampVolts(volts));
    }
  }

  /** Per-group amplitudes implied by sliders and overrides. */
  amplitudes(): Record<string, number> {
    const amps: Record<string, number> = {};
    this.classes.forEach((cls, i) => {
      const v = this.overrides.get(i) ?? this.channelVolts[this.classChannel[i]];
      for (const g of cls) amps[g] = v;
    });
    return amps;
  }

  /** Adopt a backend assignment (e.g. an optimizer result): cluster the
   * distinct amplitude levels onto channels and rewire the classes. */
  adoptAssignment(amplitudes: Record<string, number>): void {
    this.overrides.clear();
    const levels: number[] = [];
    this.classChannel = this.classes.map((cls) => {
      const v = amplitudes[cls[0]];
      let k = levels.findIndex((lv) => Math.abs(lv - v) <= 0.01);
      if (k < 0) {
        if (levels.length >= MAX_CHANNELS) {
          k = nearestLevel(levels, v);
        } else {
          levels.push(v);
          k = levels.length - 1;
        }
      }
      return k;
    });
    levels.forEach((v, i) => (this.channelVolts[i] = clampVolts(v)));
  }

  /** Allocate a sequence number for an outgoing evaluation request. */
  beginRequest(): number {
    this.pending = true;
    return this.nextSeq++;
  }

  /** Apply a response; stale (out-of-order) responses are dropped. */
  applyResponse(seq: number, resp: EvaluateResponse): boolean {
    if (seq <= this.appliedSeq) return false;
    this.appliedSeq = seq;
    this.metrics = resp.metrics;
    this.lastResponse = resp;
    this.banner = null;
    if (seq === this.nextSeq - 1) this.pending = false;
    return true;
  }

  applyFailure(seq: number, message: string): boolean {
    if (seq <= this.appliedSeq) return false;
    this.appliedSeq = seq;
    this.banner = message;
    if (seq === this.nextSeq - 1) this.pending = false;
    return true;
  }

  snapshot(): StateSnapshot {
    return {
      mode: this.mode,
      channelVolts: [...this.channelVolts],
      metrics: this.metrics,
      pending: this.pending,
      banner: this.banner,
    };
  }
}

export function clampVolts(v: number): number {
  return Math.min(VOLTS_MAX, Math.max(VOLTS_MIN, v));
}

function nearestLevel(levels: number[], v: number): number {
  let best = 0;
  for (let i = 1; i < levels.length; i++) {
    if (Math.abs(levels[i] - v) < Math.abs(levels[best] - v)) best = i;
  }
  return best;
}

/** Trailing-edge debouncer for slider drags. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number = DEBOUNCE_MS,
  timers: { set: typeof setTimeout; clear: typeof clearTimeout } = {
    set: setTimeout.bind(globalThis),
    clear: clearTimeout.bind(globalThis),
  },
): (...args: A) => void {
  let handle: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (handle !== null) timers.clear(handle);
    handle = timers.set(() => {
      handle = null;
      fn(...args);
    }, waitMs);
  };
}
