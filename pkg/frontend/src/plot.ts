import fs from "fs";

import { Table, column, readCsv } from "./csv.js";
import { bandPath, fmtTick, linearScale, niceTicks, polylinePath } from "./svg.js";

export type Panel = "rmse" | "gap" | "control";

export interface PlotSpec {
  /** input summary CSV path per controller, in plotting order */
  inputs: { name: string; path: string }[];
  panel: Panel;
  out: string;
  yLimits?: [number, number];
}

const WIDTH = 760;
const HEIGHT = 420;
const MARGIN = { left: 64, right: 16, top: 28, bottom: 44 };
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];

const PANEL_META: Record<Panel, { mean: string; std: string | null; label: string }> = {
  rmse: { mean: "rmse", std: null, label: "ensemble RMSE" },
  gap: { mean: "gap_mean", std: "gap_std", label: "relative distance [m]" },
  control: { mean: "u_mean", std: "u_std", label: "control action [m/s^2]" },
};

interface Series {
  name: string;
  time: number[];
  mean: number[];
  lower: number[] | null;
  upper: number[] | null;
}

function loadSeries(spec: PlotSpec): Series[] {
  const meta = PANEL_META[spec.panel];
  const out: Series[] = [];
  let grid: number[] | null = null;
  for (const input of spec.inputs) {
    const table: Table = readCsv(input.path);
    const time = column(table, "time_s");
    if (grid === null) {
      grid = time;
    } else {
      if (time.length !== grid.length || time.some((t, i) => t !== grid![i])) {
        throw new Error(`input grids differ: ${input.path} does not share the step/time grid`);
      }
    }
    const mean = column(table, meta.mean);
    let lower: number[] | null = null;
    let upper: number[] | null = null;
    if (meta.std !== null) {
      const std = column(table, meta.std);
      lower = mean.map((m, i) => m - std[i]);
      upper = mean.map((m, i) => m + std[i]);
    }
    out.push({ name: input.name, time, mean, lower, upper });
  }
  return out;
}

function extent(series: Series[], yLimits?: [number, number]): [number, number] {
  if (yLimits) return yLimits;
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of series) {
    const values = [...s.mean, ...(s.lower ?? []), ...(s.upper ?? [])];
    for (const v of values) {
      if (!Number.isFinite(v)) continue;
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
  }
  if (!Number.isFinite(lo)) {
    throw new Error("no finite values to plot");
  }
  const pad = (hi - lo || 1) * 0.05;
  return [lo - pad, hi + pad];
}

export function renderSvg(spec: PlotSpec): string {
  if (spec.inputs.length === 0) {
    throw new Error("no input CSVs given");
  }
  const meta = PANEL_META[spec.panel];
  const series = loadSeries(spec);
  const time = series[0].time;
  let [ylo, yhi] = extent(series, spec.yLimits);
  if (spec.panel === "gap" && !spec.yLimits) {
    // keep the collision region (gap <= 0) in frame
    ylo = Math.min(ylo, -0.04 * (yhi - ylo));
  }
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  const sx = linearScale(time[0], time[time.length - 1], x0, x1);
  const sy = linearScale(ylo, yhi, y0, y1);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
      `viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="sans-serif" font-size="12">`,
  );
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);

  if (spec.panel === "gap" && ylo < 0) {
    // collision zone: gap <= 0
    const top = sy(0);
    parts.push(
      `<rect class="collision-zone" x="${x0}" y="${top.toFixed(2)}" ` +
        `width="${x1 - x0}" height="${(y0 - top).toFixed(2)}" fill="#d62728" fill-opacity="0.15"/>`,
    );
    parts.push(
      `<text x="${x1 - 6}" y="${(top + 14).toFixed(2)}" text-anchor="end" fill="#d62728">collision zone</text>`,
    );
  }

  for (const t of niceTicks(ylo, yhi)) {
    const yy = sy(t).toFixed(2);
    parts.push(`<line x1="${x0}" y1="${yy}" x2="${x1}" y2="${yy}" stroke="#ddd"/>`);
    parts.push(`<text x="${x0 - 8}" y="${yy}" text-anchor="end" dominant-baseline="middle">${fmtTick(t)}</text>`);
  }
  for (const t of niceTicks(time[0], time[time.length - 1])) {
    const xx = sx(t).toFixed(2);
    parts.push(`<line x1="${xx}" y1="${y0}" x2="${xx}" y2="${y0 + 4}" stroke="black"/>`);
    parts.push(`<text x="${xx}" y="${y0 + 18}" text-anchor="middle">${fmtTick(t)}</text>`);
  }
  parts.push(`<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="black"/>`);
  parts.push(`<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="black"/>`);
  parts.push(
    `<text x="${(x0 + x1) / 2}" y="${HEIGHT - 8}" text-anchor="middle">time [s]</text>`,
  );
  parts.push(
    `<text transform="rotate(-90 16 ${(y0 + y1) / 2})" x="16" y="${(y0 + y1) / 2}" ` +
      `text-anchor="middle">${meta.label}</text>`,
  );

  series.forEach((s, i) => {
    const color = COLORS[i % COLORS.length];
    if (s.lower && s.upper) {
      parts.push(
        `<path class="band" d="${bandPath(s.time, s.lower, s.upper, sx, sy)}" ` +
          `fill="${color}" fill-opacity="0.2" stroke="none"/>`,
      );
    }
    parts.push(
      `<path class="mean" d="${polylinePath(s.time, s.mean, sx, sy)}" ` +
        `fill="none" stroke="${color}" stroke-width="1.5"/>`,
    );
    const ly = y1 + 16 * i + 4;
    parts.push(`<line x1="${x1 - 120}" y1="${ly}" x2="${x1 - 96}" y2="${ly}" stroke="${color}" stroke-width="2"/>`);
    parts.push(`<text x="${x1 - 90}" y="${ly + 4}">${s.name}</text>`);
  });

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}

export function render(spec: PlotSpec): void {
  fs.writeFileSync(spec.out, renderSvg(spec), "utf-8");
}
