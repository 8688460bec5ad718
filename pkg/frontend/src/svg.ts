export interface Scale {
  (v: number): number;
}

export function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0 === 0 ? 1 : d1 - d0;
  return (v: number) => r0 + ((v - d0) / span) * (r1 - r0);
}

export function polylinePath(xs: number[], ys: number[], sx: Scale, sy: Scale): string {
  const pts: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    if (!Number.isFinite(ys[i])) continue;
    const cmd = pts.length === 0 ? "M" : "L";
    pts.push(`${cmd}${sx(xs[i]).toFixed(2)},${sy(ys[i]).toFixed(2)}`);
  }
  return pts.join(" ");
}

/** Closed band polygon between lower and upper series. */
export function bandPath(
  xs: number[],
  lower: number[],
  upper: number[],
  sx: Scale,
  sy: Scale,
): string {
  const fwd: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    if (!Number.isFinite(upper[i])) continue;
    const cmd = fwd.length === 0 ? "M" : "L";
    fwd.push(`${cmd}${sx(xs[i]).toFixed(2)},${sy(upper[i]).toFixed(2)}`);
  }
  const back: string[] = [];
  for (let i = xs.length - 1; i >= 0; i--) {
    if (!Number.isFinite(lower[i])) continue;
    back.push(`L${sx(xs[i]).toFixed(2)},${sy(lower[i]).toFixed(2)}`);
  }
  return fwd.join(" ") + " " + back.join(" ") + " Z";
}

export function niceTicks(lo: number, hi: number, n = 6): number[] {
  const span = hi - lo || 1;
  const step0 = span / n;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const norm = step0 / mag;
  const step = (norm >= 5 ? 10 : norm >= 2 ? 5 : norm >= 1 ? 2 : 1) * mag;
  const start = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = start; v <= hi + 1e-12; v += step) {
    out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return out;
}

export function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1000 || a < 0.01) return v.toExponential(1);
  return String(Number(v.toPrecision(4)));
}
