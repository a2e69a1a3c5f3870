/** Canvas/SVG rendering: electrode map, heatmap, trace charts, sparkline.
 * Brighter colour = higher pseudo-potential. */

import type { LayoutElectrode, MapData, TraceData } from "./api.js";

export const CHANNEL_COLORS = ["#3f7fbf", "#bf7f3f", "#3fbf7f", "#bf3f7f"];

/** Inferno-like ramp: dark purple through orange to light yellow. */
export function heatColor(t: number): [number, number, number] {
  const x = Math.min(1, Math.max(0, t));
  const r = Math.round(255 * Math.min(1, 0.1 + 2.0 * x));
  const g = Math.round(255 * Math.max(0, Math.min(1, 1.8 * x - 0.35)));
  const b = Math.round(255 * Math.max(0, 0.35 + 0.9 * x - 1.6 * x * x));
  return [r, g, b];
}

export function drawHeatmap(canvas: HTMLCanvasElement, map: MapData): void {
  const nx = map.x_um.length;
  const nz = map.z_um.length;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const img = ctx.createImageData(nx, nz);
  let hi = 0;
  for (const row of map.psi_meV) for (const v of row) hi = Math.max(hi, v);
  const scale = hi > 0 ? 1 / Math.log1p(hi) : 1;
  for (let iz = 0; iz < nz; iz++) {
    for (let ix = 0; ix < nx; ix++) {
      const t = Math.log1p(map.psi_meV[ix][iz]) * scale;
      const [r, g, b] = heatColor(t);
      // row 0 at the top = largest z (height axis points up)
      const k = ((nz - 1 - iz) * nx + ix) * 4;
      img.data[k] = r;
      img.data[k + 1] = g;
      img.data[k + 2] = b;
      img.data[k + 3] = 255;
    }
  }
  canvas.width = nx;
  canvas.height = nz;
  ctx.putImageData(img, 0, 0);
}

export interface LayoutViewOptions {
  channelOfGroup: (group: string) => number;
  amplitudeOfGroup: (group: string) => number;
  extent?: number; // half-width of the viewport in um
}

export function renderLayoutSvg(
  electrodes: LayoutElectrode[],
  opts: LayoutViewOptions,
): string {
  const ext = opts.extent ?? 320;
  const parts: string[] = [
    `<svg viewBox="${-ext} ${-ext} ${2 * ext} ${2 * ext}" xmlns="http://www.w3.org/2000/svg">`,
    `<rect x="${-ext}" y="${-ext}" width="${2 * ext}" height="${2 * ext}" fill="#20242a"/>`,
  ];
  for (const e of electrodes) {
    const ch = opts.channelOfGroup(e.group);
    const color = CHANNEL_COLORS[ch % CHANNEL_COLORS.length] ?? "#888";
    // svg y grows downward; electrode frame has +y up
    const pts = e.polygon.map(([x, y]) => `${x},${-y}`).join(" ");
    const amp = opts.amplitudeOfGroup(e.group).toFixed(1);
    parts.push(
      `<polygon points="${pts}" fill="${color}" stroke="#11141a" stroke-width="1">` +
        `<title>${e.group}: ${amp} V (ch ${ch + 1})</title></polygon>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}

function polyline(
  xs: number[],
  ys: number[],
  w: number,
  h: number,
  pad: number,
  yLo: number,
  yHi: number,
): string {
  if (xs.length === 0) return "";
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs);
  const sx = (x: number) => pad + ((x - xLo) / Math.max(1e-12, xHi - xLo)) * (w - 2 * pad);
  const sy = (y: number) =>
    h - pad - ((y - yLo) / Math.max(1e-12, yHi - yLo)) * (h - 2 * pad);
  return xs.map((x, i) => `${sx(x).toFixed(1)},${sy(ys[i]).toFixed(1)}`).join(" ");
}

export function renderTraceCharts(trace: TraceData, w = 420, h = 150): { psi: string; height: string } {
  const pad = 8;
  const psiHi = Math.max(...trace.psi_meV, 1e-6);
  const zLo = Math.min(...trace.z_um);
  const zHi = Math.max(...trace.z_um);
  const psi =
    `<svg viewBox="0 0 ${w} ${h}" xmlns="http://www.w3.org/2000/svg">` +
    `<polyline fill="none" stroke="#e8a33d" stroke-width="1.5" points="` +
    polyline(trace.s_um, trace.psi_meV, w, h, pad, 0, psiHi) +
    `"/></svg>`;
  const height =
    `<svg viewBox="0 0 ${w} ${h}" xmlns="http://www.w3.org/2000/svg">` +
    `<polyline fill="none" stroke="#4db6ac" stroke-width="1.5" points="` +
    polyline(trace.s_um, trace.z_um, w, h, pad, zLo - 1, zHi + 1) +
    `"/></svg>`;
  return { psi, height };
}

export function renderSparkline(values: number[], w = 220, h = 48): string {
  if (values.length === 0) return "";
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const xs = values.map((_v, i) => i);
  return (
    `<svg viewBox="0 0 ${w} ${h}" xmlns="http://www.w3.org/2000/svg">` +
    `<polyline fill="none" stroke="#9ccc65" stroke-width="1.5" points="` +
    polyline(xs, values, w, h, 4, lo, Math.max(hi, lo + 1e-9)) +
    `"/></svg>`
  );
}
