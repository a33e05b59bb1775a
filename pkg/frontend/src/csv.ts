/**
 * CSV readers for the simdd benchmark schemas.
 *
 * The harness writes plain comma-separated values without quoting, so a
 * straight split is exact. Readers validate the columns they need and
 * throw CsvError naming the file and the missing pieces.
 */

export class CsvError extends Error {}

export interface Table {
  header: string[];
  rows: string[][];
}

export function parseCsv(text: string, source: string): Table {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new CsvError(`empty CSV: ${source}`);
  }
  const header = lines[0].split(",");
  const rows = lines.slice(1).map((line) => line.split(","));
  if (rows.length === 0) {
    throw new CsvError(`no data rows in ${source}`);
  }
  for (const row of rows) {
    if (row.length !== header.length) {
      throw new CsvError(`${source}: ragged row with ${row.length} fields`);
    }
  }
  return { header, rows };
}

function requireColumns(table: Table, required: string[], source: string): Map<string, number> {
  const index = new Map<string, number>();
  table.header.forEach((name, i) => index.set(name, i));
  const missing = required.filter((name) => !index.has(name));
  if (missing.length > 0) {
    throw new CsvError(`${source}: missing columns ${missing.join(", ")}`);
  }
  return index;
}

/** One row of a sweep CSV (sensing or link metrics). */
export interface SweepRow {
  waveform: string;
  simMode: string;
  snrDb: number;
  trial: number;
  metricName: string;
  metricValue: number;
}

export function readSweepRows(text: string, source: string): SweepRow[] {
  const table = parseCsv(text, source);
  const col = requireColumns(
    table,
    ["waveform", "sim_mode", "snr_db", "trial", "metric_name", "metric_value"],
    source,
  );
  return table.rows.map((row) => ({
    waveform: row[col.get("waveform")!],
    simMode: row[col.get("sim_mode")!],
    snrDb: Number(row[col.get("snr_db")!]),
    trial: Number(row[col.get("trial")!]),
    metricName: row[col.get("metric_name")!],
    metricValue: Number(row[col.get("metric_value")!]),
  }));
}

/** A convergence trace: per-iteration objectives for every path. */
export interface ConvergenceTrace {
  iterations: number[];
  targets: number[];
  /** objectives[p][i] is path p's objective at trace row i. */
  objectives: number[][];
}

export function readConvergenceTrace(text: string, source: string): ConvergenceTrace {
  const table = parseCsv(text, source);
  const col = requireColumns(table, ["iteration", "sweep", "targeted_path"], source);
  const objectiveColumns = table.header
    .filter((name) => name.startsWith("objective_"))
    .sort((a, b) => Number(a.split("_")[1]) - Number(b.split("_")[1]));
  if (objectiveColumns.length === 0) {
    throw new CsvError(`${source}: no objective_* columns`);
  }
  const iterations = table.rows.map((row) => Number(row[col.get("iteration")!]));
  const targets = table.rows.map((row) => Number(row[col.get("targeted_path")!]));
  const objectives = objectiveColumns.map((name) => {
    const i = table.header.indexOf(name);
    return table.rows.map((row) => Number(row[i]));
  });
  return { iterations, targets, objectives };
}
