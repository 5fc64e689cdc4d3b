/**
 * Minimal deterministic SVG plotting: linear/log axes, polylines, scatter
 * markers, shaded bands, text.  Pure string assembly, no DOM.
 */

export interface Extent {
  min: number;
  max: number;
}

export type ScaleKind = "linear" | "log";

export class Scale {
  constructor(
    readonly kind: ScaleKind,
    readonly domain: Extent,
    readonly range: Extent,
  ) {
    if (kind === "log" && (domain.min <= 0 || domain.max <= 0)) {
      throw new Error("log scale needs a positive domain");
    }
  }

  apply(x: number): number {
    const [d0, d1] = this.kind === "log"
      ? [Math.log10(this.domain.min), Math.log10(this.domain.max)]
      : [this.domain.min, this.domain.max];
    const v = this.kind === "log" ? Math.log10(x) : x;
    const t = d1 === d0 ? 0.5 : (v - d0) / (d1 - d0);
    return this.range.min + t * (this.range.max - this.range.min);
  }

  ticks(count = 5): number[] {
    if (this.kind === "log") {
      const lo = Math.ceil(Math.log10(this.domain.min) - 1e-9);
      const hi = Math.floor(Math.log10(this.domain.max) + 1e-9);
      const out: number[] = [];
      for (let e = lo; e <= hi; e++) out.push(10 ** e);
      if (out.length === 0) out.push(this.domain.min, this.domain.max);
      return out;
    }
    const span = this.domain.max - this.domain.min;
    if (span <= 0) return [this.domain.min];
    const step = span / (count - 1);
    return Array.from({ length: count }, (_, i) => this.domain.min + i * step);
  }
}

export function extent(values: number[], padFrac = 0.05): Extent {
  const finite = values.filter((v) => Number.isFinite(v));
  if (finite.length === 0) throw new Error("no finite values to plot");
  let min = Math.min(...finite);
  let max = Math.max(...finite);
  if (min === max) {
    min -= Math.abs(min) * 0.5 + 1e-12;
    max += Math.abs(max) * 0.5 + 1e-12;
  }
  const pad = (max - min) * padFrac;
  return { min: min - pad, max: max + pad };
}

export function logExtent(values: number[]): Extent {
  const pos = values.filter((v) => Number.isFinite(v) && v > 0);
  if (pos.length === 0) throw new Error("no positive values for a log axis");
  const min = Math.min(...pos);
  const max = Math.max(...pos);
  return { min: min / 1.3, max: max * 1.3 };
}

function fmt(x: number): string {
  if (x === 0) return "0";
  const a = Math.abs(x);
  if (a >= 0.01 && a < 10_000) return String(Number(x.toPrecision(4)));
  return x.toExponential(1);
}

export interface FrameOptions {
  width?: number;
  height?: number;
  title?: string;
  xLabel?: string;
  yLabel?: string;
  xKind?: ScaleKind;
  yKind?: ScaleKind;
}

const MARGIN = { left: 64, right: 16, top: 34, bottom: 44 };

export class Figure {
  readonly width: number;
  readonly height: number;
  readonly x: Scale;
  readonly y: Scale;
  private parts: string[] = [];

  constructor(xDomain: Extent, yDomain: Extent, opts: FrameOptions = {}) {
    this.width = opts.width ?? 560;
    this.height = opts.height ?? 400;
    this.x = new Scale(opts.xKind ?? "linear", xDomain,
      { min: MARGIN.left, max: this.width - MARGIN.right });
    this.y = new Scale(opts.yKind ?? "linear", yDomain,
      { min: this.height - MARGIN.bottom, max: MARGIN.top });
    this.frame(opts);
  }

  private frame(opts: FrameOptions): void {
    const { left, right, top, bottom } = MARGIN;
    const x0 = left;
    const x1 = this.width - right;
    const y0 = this.height - bottom;
    const y1 = top;
    this.parts.push(
      `<rect x="0" y="0" width="${this.width}" height="${this.height}" fill="white"/>`,
    );
    for (const t of this.x.ticks()) {
      const px = this.x.apply(t);
      this.parts.push(
        `<line x1="${px.toFixed(2)}" y1="${y0}" x2="${px.toFixed(2)}" y2="${y1}" stroke="#eee"/>`,
        `<text x="${px.toFixed(2)}" y="${y0 + 16}" font-size="11" text-anchor="middle">${fmt(t)}</text>`,
      );
    }
    for (const t of this.y.ticks()) {
      const py = this.y.apply(t);
      this.parts.push(
        `<line x1="${x0}" y1="${py.toFixed(2)}" x2="${x1}" y2="${py.toFixed(2)}" stroke="#eee"/>`,
        `<text x="${x0 - 6}" y="${(py + 4).toFixed(2)}" font-size="11" text-anchor="end">${fmt(t)}</text>`,
      );
    }
    this.parts.push(
      `<rect x="${x0}" y="${y1}" width="${x1 - x0}" height="${y0 - y1}" fill="none" stroke="#444"/>`,
    );
    if (opts.title) {
      this.parts.push(
        `<text x="${this.width / 2}" y="20" font-size="14" text-anchor="middle" font-weight="bold">${escapeXml(opts.title)}</text>`,
      );
    }
    if (opts.xLabel) {
      this.parts.push(
        `<text x="${(x0 + x1) / 2}" y="${this.height - 8}" font-size="12" text-anchor="middle">${escapeXml(opts.xLabel)}</text>`,
      );
    }
    if (opts.yLabel) {
      this.parts.push(
        `<text x="14" y="${(y0 + y1) / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 ${(y0 + y1) / 2})">${escapeXml(opts.yLabel)}</text>`,
      );
    }
  }

  private pts(xs: number[], ys: number[]): string {
    const out: string[] = [];
    for (let i = 0; i < xs.length; i++) {
      out.push(`${this.x.apply(xs[i]).toFixed(2)},${this.y.apply(ys[i]).toFixed(2)}`);
    }
    return out.join(" ");
  }

  line(xs: number[], ys: number[], color: string, width = 1.8, dash = ""): void {
    const dashAttr = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<polyline points="${this.pts(xs, ys)}" fill="none" stroke="${color}" stroke-width="${width}"${dashAttr}/>`,
    );
  }

  scatter(xs: number[], ys: number[], color: string, r = 3): void {
    for (let i = 0; i < xs.length; i++) {
      this.parts.push(
        `<circle cx="${this.x.apply(xs[i]).toFixed(2)}" cy="${this.y.apply(ys[i]).toFixed(2)}" r="${r}" fill="${color}" fill-opacity="0.75"/>`,
      );
    }
  }

  band(xs: number[], lower: number[], upper: number[], color: string): void {
    const fwd = this.pts(xs, upper);
    const back = this.pts([...xs].reverse(), [...lower].reverse());
    this.parts.push(
      `<polygon points="${fwd} ${back}" fill="${color}" fill-opacity="0.25" stroke="none"/>`,
    );
  }

  bar(x0: number, x1: number, y0: number, y1: number, color: string): void {
    const px0 = this.x.apply(x0);
    const px1 = this.x.apply(x1);
    const py0 = this.y.apply(y0);
    const py1 = this.y.apply(y1);
    this.parts.push(
      `<rect x="${Math.min(px0, px1).toFixed(2)}" y="${Math.min(py0, py1).toFixed(2)}" width="${Math.abs(px1 - px0).toFixed(2)}" height="${Math.abs(py0 - py1).toFixed(2)}" fill="${color}" stroke="#444" stroke-width="0.5"/>`,
    );
  }

  note(x: number, y: number, text: string, color = "#222"): void {
    this.parts.push(
      `<text x="${x}" y="${y}" font-size="12" fill="${color}">${escapeXml(text)}</text>`,
    );
  }

  legend(entries: [string, string][]): void {
    let y = MARGIN.top + 14;
    for (const [label, color] of entries) {
      const x = this.width - MARGIN.right - 150;
      this.parts.push(
        `<line x1="${x}" y1="${y - 4}" x2="${x + 22}" y2="${y - 4}" stroke="${color}" stroke-width="2.5"/>`,
        `<text x="${x + 28}" y="${y}" font-size="11">${escapeXml(label)}</text>`,
      );
      y += 16;
    }
  }

  render(): string {
    return `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" viewBox="0 0 ${this.width} ${this.height}">\n${this.parts.join("\n")}\n</svg>\n`;
  }
}

export function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
