import fs from "fs";

export interface Table {
  columns: string[];
  rows: number[][];
}

export function parseCsv(text: string): Table {
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines.length < 2) {
    throw new Error("CSV has no data rows");
  }
  const columns = lines[0].split(",");
  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== columns.length) {
      throw new Error(`row ${i} has ${parts.length} fields, header has ${columns.length}`);
    }
    rows.push(parts.map(Number));
  }
  return { columns, rows };
}

export function readCsv(path: string): Table {
  return parseCsv(fs.readFileSync(path, "utf-8"));
}

export function column(table: Table, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new Error(`missing column '${name}' (have: ${table.columns.join(", ")})`);
  }
  return table.rows.map((r) => r[idx]);
}
