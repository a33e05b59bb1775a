/**
 * Dependency-free SVG plotting primitives.
 *
 * Just enough structure for publication-style line charts: linear or
 * log10 axes with ticks, polyline series tagged with data attributes so
 * downstream checks can count them, point markers, dashed reference
 * lines and a legend.
 */

export const PALETTE = [
  "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

export type ScaleKind = "linear" | "log";

export class Scale {
  constructor(
    readonly kind: ScaleKind,
    readonly domain: [number, number],
    readonly range: [number, number],
  ) {
    if (kind === "log" && (domain[0] <= 0 || domain[1] <= 0)) {
      throw new Error("log scale needs a positive domain");
    }
  }

  map(value: number): number {
    const [d0, d1] = this.domain;
    const [r0, r1] = this.range;
    let t: number;
    if (this.kind === "log") {
      t = (Math.log10(value) - Math.log10(d0)) / (Math.log10(d1) - Math.log10(d0) || 1);
    } else {
      t = (value - d0) / (d1 - d0 || 1);
    }
    return r0 + t * (r1 - r0);
  }

  ticks(): number[] {
    const [d0, d1] = this.domain;
    if (this.kind === "log") {
      const lo = Math.ceil(Math.log10(d0) - 1e-9);
      const hi = Math.floor(Math.log10(d1) + 1e-9);
      const out: number[] = [];
      for (let e = lo; e <= hi; e += Math.max(1, Math.floor((hi - lo) / 8))) {
        out.push(10 ** e);
      }
      return out.length > 0 ? out : [d0, d1];
    }
    const span = d1 - d0;
    if (span === 0) return [d0];
    const step = niceStep(span / 5);
    const out: number[] = [];
    for (let v = Math.ceil(d0 / step) * step; v <= d1 + 1e-12 * span; v += step) {
      out.push(Number(v.toPrecision(12)));
    }
    return out;
  }
}

function niceStep(raw: number): number {
  const mag = 10 ** Math.floor(Math.log10(raw));
  const unit = raw / mag;
  if (unit <= 1) return mag;
  if (unit <= 2) return 2 * mag;
  if (unit <= 5) return 5 * mag;
  return 10 * mag;
}

function fmt(value: number): string {
  if (value === 0) return "0";
  const abs = Math.abs(value);
  if (abs >= 1e4 || abs < 1e-3) {
    return value.toExponential(0).replace("+", "");
  }
  return Number(value.toPrecision(6)).toString();
}

const esc = (s: string) => s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

export interface SeriesOptions {
  color: string;
  label: string;
  dash?: string;
  markers?: boolean;
}

/** One set of axes inside a figure. */
export class Panel {
  private body: string[] = [];
  private legend: Array<[string, string]> = [];

  constructor(
    readonly left: number,
    readonly top: number,
    readonly width: number,
    readonly height: number,
    readonly xScale: Scale,
    readonly yScale: Scale,
    readonly labels: { x: string; y: string; title?: string },
  ) {}

  addSeries(points: Array<[number, number]>, options: SeriesOptions): void {
    const coords = points
      .map(([x, y]) => `${this.xScale.map(x).toFixed(2)},${this.yScale.map(y).toFixed(2)}`)
      .join(" ");
    this.body.push(
      `<polyline class="series" data-series="${esc(options.label)}" fill="none" ` +
      `stroke="${options.color}"${options.dash ? ` stroke-dasharray="${options.dash}"` : ""} ` +
      `stroke-width="1.5" points="${coords}"/>`,
    );
    if (options.markers ?? true) {
      for (const [x, y] of points) {
        this.body.push(
          `<circle cx="${this.xScale.map(x).toFixed(2)}" cy="${this.yScale.map(y).toFixed(2)}" ` +
          `r="2.5" fill="${options.color}"/>`,
        );
      }
    }
    this.legend.push([options.label, options.color]);
  }

  /** Down-pointing markers for values clipped to the display floor. */
  addClippedMarkers(points: Array<[number, number]>, color: string): void {
    for (const [x, y] of points) {
      const cx = this.xScale.map(x);
      const cy = this.yScale.map(y);
      this.body.push(
        `<path class="clipped" fill="${color}" d="M ${(cx - 4).toFixed(2)} ${(cy - 3).toFixed(2)} ` +
        `L ${(cx + 4).toFixed(2)} ${(cy - 3).toFixed(2)} L ${cx.toFixed(2)} ${(cy + 4).toFixed(2)} Z"/>`,
      );
    }
  }

  addReferenceLine(y: number, label: string): void {
    const py = this.yScale.map(y).toFixed(2);
    this.body.push(
      `<line class="floor" x1="${this.left}" x2="${this.left + this.width}" ` +
      `y1="${py}" y2="${py}" stroke="#000" stroke-width="1" stroke-dasharray="6,3"/>`,
    );
    this.legend.push([label, "#000"]);
  }

  render(): string {
    const parts: string[] = [];
    const { left, top, width, height } = this;
    parts.push(
      `<rect x="${left}" y="${top}" width="${width}" height="${height}" ` +
      `fill="none" stroke="#333" stroke-width="1"/>`,
    );
    for (const tick of this.xScale.ticks()) {
      const px = this.xScale.map(tick).toFixed(2);
      parts.push(
        `<line x1="${px}" x2="${px}" y1="${top + height}" y2="${top + height + 4}" stroke="#333"/>`,
        `<text x="${px}" y="${top + height + 16}" font-size="10" text-anchor="middle">${fmt(tick)}</text>`,
        `<line x1="${px}" x2="${px}" y1="${top}" y2="${top + height}" stroke="#ddd" stroke-width="0.5"/>`,
      );
    }
    for (const tick of this.yScale.ticks()) {
      const py = this.yScale.map(tick).toFixed(2);
      parts.push(
        `<line x1="${left - 4}" x2="${left}" y1="${py}" y2="${py}" stroke="#333"/>`,
        `<text x="${left - 7}" y="${Number(py) + 3}" font-size="10" text-anchor="end">${fmt(tick)}</text>`,
        `<line x1="${left}" x2="${left + width}" y1="${py}" y2="${py}" stroke="#ddd" stroke-width="0.5"/>`,
      );
    }
    parts.push(...this.body);
    parts.push(
      `<text x="${left + width / 2}" y="${top + height + 32}" font-size="11" ` +
      `text-anchor="middle">${esc(this.labels.x)}</text>`,
      `<text x="${left - 42}" y="${top + height / 2}" font-size="11" text-anchor="middle" ` +
      `transform="rotate(-90 ${left - 42} ${top + height / 2})">${esc(this.labels.y)}</text>`,
    );
    if (this.labels.title) {
      parts.push(
        `<text x="${left + width / 2}" y="${top - 8}" font-size="12" ` +
        `text-anchor="middle" font-weight="bold">${esc(this.labels.title)}</text>`,
      );
    }
    let ly = top + 12;
    for (const [label, color] of this.legend) {
      parts.push(
        `<line x1="${left + width + 10}" x2="${left + width + 28}" y1="${ly}" y2="${ly}" ` +
        `stroke="${color}" stroke-width="2"/>`,
        `<text x="${left + width + 32}" y="${ly + 3}" font-size="9">${esc(label)}</text>`,
      );
      ly += 13;
    }
    return parts.join("\n");
  }
}

export function document(width: number, height: number, panels: Panel[]): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`,
    `<rect width="${width}" height="${height}" fill="#fff"/>`,
    ...panels.map((panel) => panel.render()),
    `</svg>`,
    ``,
  ].join("\n");
}
