/** Median aggregation of sweep rows into per-configuration curves. */

import { SweepRow } from "./csv.js";

export function median(values: number[]): number {
  if (values.length === 0) {
    throw new Error("median of an empty list");
  }
  const sorted = [...values].sort((a, b) => a - b);
  const mid = Math.floor(sorted.length / 2);
  return sorted.length % 2 === 1 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
}

export interface Curve {
  /** "waveform/mode" label. */
  label: string;
  /** [snr, median metric] points in ascending SNR order. */
  points: Array<[number, number]>;
}

/** Median over trials of one metric, per (waveform, sim_mode) and SNR. */
export function medianCurves(rows: SweepRow[], metric: string): Curve[] {
  const buckets = new Map<string, Map<number, number[]>>();
  for (const row of rows) {
    if (row.metricName !== metric) continue;
    const label = `${row.waveform}/${row.simMode}`;
    let series = buckets.get(label);
    if (!series) {
      series = new Map();
      buckets.set(label, series);
    }
    let values = series.get(row.snrDb);
    if (!values) {
      values = [];
      series.set(row.snrDb, values);
    }
    values.push(row.metricValue);
  }
  const curves: Curve[] = [];
  for (const label of [...buckets.keys()].sort()) {
    const series = buckets.get(label)!;
    const points = [...series.entries()]
      .map(([snr, values]) => [snr, median(values)] as [number, number])
      .sort((a, b) => a[0] - b[0]);
    curves.push({ label, points });
  }
  return curves;
}

/** Median level of a constant-per-scenario metric (the resolution floor). */
export function medianLevel(rows: SweepRow[], metric: string): number | undefined {
  const values = rows.filter((r) => r.metricName === metric).map((r) => r.metricValue);
  return values.length > 0 ? median(values) : undefined;
}
