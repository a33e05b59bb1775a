/**
 * The three benchmark figures, built from harness CSV text.
 *
 * Values of zero cannot sit on a log axis; they are clipped to a fixed
 * display floor and flagged with a down-pointing marker, so a perfect
 * result is still visible as "at or below the floor".
 */

import { readConvergenceTrace, readSweepRows, SweepRow } from "./csv.js";
import { Curve, medianCurves, medianLevel } from "./aggregate.js";
import { document, Panel, PALETTE, Scale } from "./svg.js";

export const LOG_CLIP_FLOOR = 1e-7;

function positiveExtent(values: number[]): [number, number] {
  const positive = values.filter((v) => v > 0);
  const lo = positive.length > 0 ? Math.min(...positive) : LOG_CLIP_FLOOR;
  const hi = positive.length > 0 ? Math.max(...positive) : 1;
  return [Math.min(lo, LOG_CLIP_FLOOR * 10), Math.max(hi, lo * 10)];
}

export function convergenceFigure(csvText: string, source: string): string {
  const trace = readConvergenceTrace(csvText, source);
  const allValues = trace.objectives.flat();
  const [lo, hi] = positiveExtent(allValues);
  const panel = new Panel(
    70, 40, 440, 300,
    new Scale("linear", [trace.iterations[0], trace.iterations[trace.iterations.length - 1] || 1], [70, 510]),
    new Scale("log", [lo, hi], [340, 40]),
    { x: "iteration", y: "path objective", title: "Min-max phase optimization" },
  );
  trace.objectives.forEach((series, p) => {
    const points = series.map(
      (v, i) => [trace.iterations[i], Math.max(v, lo)] as [number, number],
    );
    panel.addSeries(points, {
      color: PALETTE[p % PALETTE.length],
      label: `path ${p + 1}`,
      markers: false,
    });
  });
  // Dotted vertical lines wherever the targeted path changes.
  const extras: string[] = [];
  for (let i = 1; i < trace.targets.length; i += 1) {
    if (trace.targets[i] !== trace.targets[i - 1]) {
      const px = panel.xScale.map(trace.iterations[i]).toFixed(2);
      extras.push(
        `<line class="switch" x1="${px}" x2="${px}" y1="40" y2="340" ` +
        `stroke="#888" stroke-width="1" stroke-dasharray="2,3"/>`,
      );
    }
  }
  const svg = document(640, 400, [panel]);
  return svg.replace("</svg>", `${extras.join("\n")}\n</svg>`);
}

interface MetricPanelSpec {
  metric: string;
  floorMetric?: string;
  yLabel: string;
  title: string;
}

function metricPanel(rows: SweepRow[], spec: MetricPanelSpec,
                     left: number): Panel {
  const curves = medianCurves(rows, spec.metric);
  if (curves.length === 0) {
    throw new Error(`no rows with metric_name=${spec.metric}`);
  }
  const snrs = curves.flatMap((c: Curve) => c.points.map((p) => p[0]));
  const values = curves.flatMap((c: Curve) => c.points.map((p) => p[1]));
  const floor = spec.floorMetric ? medianLevel(rows, spec.floorMetric) : undefined;
  const [lo, hi] = positiveExtent(values.concat(floor !== undefined ? [floor] : []));
  const yLo = Math.min(lo, LOG_CLIP_FLOOR);
  const panel = new Panel(
    left, 40, 330, 300,
    new Scale("linear", [Math.min(...snrs), Math.max(...snrs)], [left, left + 330]),
    new Scale("log", [yLo, hi], [340, 40]),
    { x: "SNR (dB)", y: spec.yLabel, title: spec.title },
  );
  curves.forEach((curve: Curve, i: number) => {
    const color = PALETTE[i % PALETTE.length];
    const clipped = curve.points.filter(([, v]) => v < LOG_CLIP_FLOOR);
    const display = curve.points.map(
      ([snr, v]) => [snr, Math.max(v, LOG_CLIP_FLOOR)] as [number, number],
    );
    panel.addSeries(display, { color, label: curve.label });
    if (clipped.length > 0) {
      panel.addClippedMarkers(
        clipped.map(([snr]) => [snr, LOG_CLIP_FLOOR] as [number, number]),
        color,
      );
    }
  });
  if (floor !== undefined) {
    panel.addReferenceLine(Math.max(floor, LOG_CLIP_FLOOR), "resolution limit");
  }
  return panel;
}

export function sensingFigure(csvText: string, source: string): string {
  const rows = readSweepRows(csvText, source);
  const range = metricPanel(rows, {
    metric: "range_rmse_m",
    floorMetric: "range_floor_m",
    yLabel: "range RMSE (m)",
    title: "Range accuracy",
  }, 70);
  const velocity = metricPanel(rows, {
    metric: "velocity_rmse_mps",
    floorMetric: "velocity_floor_mps",
    yLabel: "velocity RMSE (m/s)",
    title: "Velocity accuracy",
  }, 560);
  return document(1080, 400, [range, velocity]);
}

export function linkFigure(csvText: string, source: string): string {
  const rows = readSweepRows(csvText, source);
  const panel = metricPanel(rows, {
    metric: "ber",
    yLabel: "bit error rate",
    title: "Link-level error rate",
  }, 70);
  return document(620, 400, [panel]);
}
