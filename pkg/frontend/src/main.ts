#!/usr/bin/env node
import fs from "fs";
import path from "path";

import { Panel, PlotSpec, render } from "./plot.js";

function usage(): never {
  console.error(
    "usage: plots --in <dir> --panel {rmse|gap|control} --out <file> " +
      "[--controller <name> ...] [--ymin <v> --ymax <v>]",
  );
  process.exit(2);
}

export function discoverControllers(dir: string): string[] {
  return fs
    .readdirSync(dir)
    .filter((f) => f.startsWith("summary_") && f.endsWith(".csv"))
    .map((f) => f.slice("summary_".length, -".csv".length))
    .sort();
}

export function parseArgs(argv: string[]): PlotSpec {
  let dir: string | null = null;
  let panel: string | null = null;
  let out: string | null = null;
  let ymin: number | null = null;
  let ymax: number | null = null;
  const controllers: string[] = [];
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    const next = () => {
      i++;
      if (i >= argv.length) usage();
      return argv[i];
    };
    if (a === "--in") dir = next();
    else if (a === "--panel") panel = next();
    else if (a === "--out") out = next();
    else if (a === "--controller") controllers.push(next());
    else if (a === "--ymin") ymin = Number(next());
    else if (a === "--ymax") ymax = Number(next());
    else usage();
  }
  if (!dir || !out || !panel) usage();
  if (panel !== "rmse" && panel !== "gap" && panel !== "control") {
    console.error(`unknown panel '${panel}'`);
    process.exit(2);
  }
  const names = controllers.length > 0 ? controllers : discoverControllers(dir);
  if (names.length === 0) {
    console.error(`no summary_*.csv files found in ${dir}`);
    process.exit(2);
  }
  const spec: PlotSpec = {
    inputs: names.map((n) => ({ name: n, path: path.join(dir!, `summary_${n}.csv`) })),
    panel: panel as Panel,
    out,
  };
  if (ymin !== null && ymax !== null) spec.yLimits = [ymin, ymax];
  return spec;
}

function main(): void {
  const spec = parseArgs(process.argv.slice(2));
  try {
    render(spec);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    process.exit(1);
  }
  console.log(`wrote ${spec.out}`);
}

if (process.argv[1] && path.basename(process.argv[1]).startsWith("main")) {
  main();
}
