/** Console wiring: sliders -> debounced evaluate -> heatmap/charts/readouts,
 * optimizer job submission with a live sparkline. */

import { Api, ApiError } from "./api.js";
import type { LayoutResponse } from "./api.js";
import { pollJob } from "./poll.js";
import {
  CHANNEL_COLORS,
  drawHeatmap,
  renderLayoutSvg,
  renderSparkline,
  renderTraceCharts,
} from "./render.js";
import { ConsoleState, DEBOUNCE_MS, MAX_CHANNELS, debounce } from "./state.js";

const HEATMAP_GRID = { x_um: [0, 250, 2], z_um: [20, 150, 2] }; // 126 x 66

const api = new Api();
const state = new ConsoleState();
let layout: LayoutResponse | null = null;
let cancelJob: (() => void) | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function channelOfGroup(group: string): number {
  const i = state.classes.findIndex((cls) => cls.includes(group));
  return i >= 0 ? state.classChannel[i] : 0;
}

function redrawLayout(): void {
  if (!layout) return;
  const amps = state.amplitudes();
  el("layout-view").innerHTML = renderLayoutSvg(layout.layout.electrodes, {
    channelOfGroup,
    amplitudeOfGroup: (g) => amps[g] ?? 0,
  });
}

function redrawMetrics(): void {
  const m = state.metrics;
  el("barrier-readout").textContent = m ? `${m.barrier_meV.toFixed(4)} meV` : "—";
  el("height-readout").textContent = m ? `${m.heightVar_um.toFixed(2)} µm` : "—";
  const banner = el("banner");
  banner.textContent = state.banner ?? "";
  banner.style.display = state.banner ? "block" : "none";
  el("pending").style.visibility = state.pending ? "visible" : "hidden";
}

function redrawCharts(): void {
  const resp = state.lastResponse;
  if (!resp) return;
  drawHeatmap(el<HTMLCanvasElement>("heatmap"), resp.map);
  const charts = renderTraceCharts(resp.trace);
  el("psi-chart").innerHTML = charts.psi;
  el("height-chart").innerHTML = charts.height;
}

async function evaluateNow(): Promise<void> {
  const seq = state.beginRequest();
  redrawMetrics();
  try {
    const resp = await api.evaluate({
      amplitudes: state.amplitudes(),
      mode: state.mode,
      grid: HEATMAP_GRID,
      trace_range_um: [0, 500],
      trace_step_um: 2,
    });
    if (state.applyResponse(seq, resp)) {
      redrawMetrics();
      redrawCharts();
    }
  } catch (err) {
    const msg =
      err instanceof ApiError && err.status === 422
        ? `tracing failed: ${err.message}`
        : `evaluation error: ${(err as Error).message}`;
    if (state.applyFailure(seq, msg)) redrawMetrics();
  }
}

const evaluateDebounced = debounce(() => void evaluateNow(), DEBOUNCE_MS);

function buildSliders(): void {
  const host = el("sliders");
  host.innerHTML = "";
  for (let ch = 0; ch < MAX_CHANNELS; ch++) {
    const row = document.createElement("div");
    row.className = "slider-row";
    const label = document.createElement("label");
    label.textContent = `ch ${ch + 1}`;
    label.style.color = CHANNEL_COLORS[ch];
    const input = document.createElement("input");
    input.type = "range";
    input.min = "0";
    input.max = "200";
    input.step = "0.5";
    input.value = String(state.channelVolts[ch]);
    input.id = `slider-ch${ch}`;
    const value = document.createElement("span");
    value.textContent = `${state.channelVolts[ch].toFixed(1)} V`;
    input.addEventListener("input", () => {
      state.setChannel(ch, Number(input.value));
      value.textContent = `${Number(input.value).toFixed(1)} V`;
      redrawLayout();
      evaluateDebounced();
    });
    row.append(label, input, value);
    host.append(row);
  }
}

function refreshSliders(): void {
  for (let ch = 0; ch < MAX_CHANNELS; ch++) {
    const input = document.getElementById(`slider-ch${ch}`) as HTMLInputElement | null;
    if (input) {
      input.value = String(state.channelVolts[ch]);
      const value = input.nextElementSibling as HTMLSpanElement | null;
      if (value) value.textContent = `${state.channelVolts[ch].toFixed(1)} V`;
    }
  }
}

function buildOverrides(): void {
  const host = el("overrides");
  host.innerHTML = "";
  state.classes.forEach((cls, i) => {
    const row = document.createElement("div");
    row.className = "override-row";
    const label = document.createElement("span");
    label.textContent = cls.join(" ");
    const input = document.createElement("input");
    input.type = "number";
    input.min = "0";
    input.max = "200";
    input.placeholder = "ch value";
    input.addEventListener("change", () => {
      state.setOverride(i, input.value === "" ? null : Number(input.value));
      redrawLayout();
      evaluateDebounced();
    });
    row.append(label, input);
    host.append(row);
  });
}

async function switchMode(mode: "corner" | "linear"): Promise<void> {
  state.mode = mode;
  const groups = await api.groups(mode);
  state.setClasses(groups.classes);
  buildOverrides();
  redrawLayout();
  evaluateDebounced();
}

async function runOptimizer(): Promise<void> {
  const spark = el("sparkline");
  const status = el("job-status");
  if (cancelJob) cancelJob();
  status.textContent = "submitting…";
  try {
    const { job_id } = await api.submitOptimize({
      mode: state.mode,
      restarts: 2,
      max_evals: 200,
      seed: 7,
    });
    status.textContent = `job ${job_id.slice(0, 8)} running`;
    const handle = pollJob(api, job_id, (conv) => {
      spark.innerHTML = renderSparkline(conv);
    });
    cancelJob = handle.cancel;
    const final = await handle.done;
    cancelJob = null;
    status.textContent = `done: ${final.result!.barrier_meV.toFixed(4)} meV after ${final.result!.evaluations} evals`;
    // snap sliders to the optimized amplitudes for further hand-tuning
    state.adoptAssignment(final.result!.bestAmplitudes);
    refreshSliders();
    redrawLayout();
    evaluateDebounced();
  } catch (err) {
    if ((err as Error).message !== "cancelled") {
      status.textContent = `optimizer failed: ${(err as Error).message}`;
    } else {
      status.textContent = "cancelled (sliders untouched)";
    }
  }
}

async function start(): Promise<void> {
  layout = await api.layout();
  el("layout-hash").textContent = layout.layout_hash;
  buildSliders();
  await switchMode("corner");
  el("mode-corner").addEventListener("click", () => void switchMode("corner"));
  el("mode-linear").addEventListener("click", () => void switchMode("linear"));
  el("run-optimizer").addEventListener("click", () => void runOptimizer());
  el("cancel-optimizer").addEventListener("click", () => {
    if (cancelJob) cancelJob();
    cancelJob = null;
  });
}

void start();
