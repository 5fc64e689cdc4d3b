/**
 * The four figure kinds.  Every number shown is read from the artifacts;
 * nothing is recomputed here beyond axis arithmetic.
 */

import {
  BandsArtifact,
  OseenGaps,
  ResultRow,
  SchemaError,
  Summary,
  parseBands,
  parseOseenGaps,
  parseResultsCsv,
  parseSummary,
} from "./schema.js";
import { Figure, extent, logExtent } from "./svg.js";

export type FigureKind = "rate" | "bands" | "oseen_gaps" | "conditions";

export const FIGURE_KINDS: FigureKind[] = ["rate", "bands", "oseen_gaps", "conditions"];

const BLUE = "#20639b";
const ORANGE = "#d1495b";
const GREEN = "#3caea3";
const GRAY = "#666666";

function median(values: number[]): number {
  const v = [...values].sort((a, b) => a - b);
  const mid = Math.floor(v.length / 2);
  return v.length % 2 ? v[mid] : (v[mid - 1] + v[mid]) / 2;
}

/** Contraction-rate figure: per-seed errors, medians, fitted and reference slopes. */
export function renderRate(csvText: string, summaryText: string): string {
  const rows = parseResultsCsv(csvText).filter((r) => Number.isFinite(r.l2_mean));
  if (rows.length === 0) throw new SchemaError("no finite l2_mean rows");
  const summary: Summary = parseSummary(summaryText);
  if (!summary.rate) {
    throw new SchemaError("summary has no rate fit (need three or more Ns)");
  }
  const fit = summary.rate;

  const ns = rows.map((r) => r.N);
  const errs = rows.map((r) => r.l2_mean);
  const fig = new Figure(logExtent(ns), logExtent(errs), {
    title: "posterior-mean contraction",
    xLabel: "N (observations)",
    yLabel: "L2 error of the posterior mean",
    xKind: "log",
    yKind: "log",
  });
  fig.scatter(ns, errs, BLUE);

  const uniqueNs = [...new Set(ns)].sort((a, b) => a - b);
  const medians = uniqueNs.map((n) =>
    median(rows.filter((r) => r.N === n).map((r) => r.l2_mean)));
  fig.line(uniqueNs, medians, BLUE, 2.2);

  // fitted line from the summary (log error = slope * log N + intercept)
  const fitted = uniqueNs.map((n) => Math.exp(fit.intercept + fit.slope * Math.log(n)));
  fig.line(uniqueNs, fitted, ORANGE, 1.8, "6 3");

  // theoretical reference slope anchored at the first median
  const refSlope = summary.theoretical_slope;
  const ref = uniqueNs.map((n) => medians[0] * (n / uniqueNs[0]) ** refSlope);
  fig.line(uniqueNs, ref, GRAY, 1.5, "2 3");

  fig.legend([
    ["per-seed error", BLUE],
    [`fit slope = ${fit.slope}`, ORANGE],
    [`reference slope = ${refSlope}`, GRAY],
  ]);
  return fig.render();
}

/** Credible band versus the ground truth (cross-section for planar fields). */
export function renderBands(bandsText: string): string {
  const bands: BandsArtifact = parseBands(bandsText);
  const m = bands.resolution;
  const slice = (v: number[]): number[] => v.slice(0, m);
  const xs = Array.from({ length: m }, (_, i) => i / m);
  const lower = slice(bands.lower);
  const upper = slice(bands.upper);
  const mean = slice(bands.mean);
  const truth = slice(bands.truth);
  const fig = new Figure(
    { min: 0, max: 1 },
    extent([...lower, ...upper, ...mean, ...truth]),
    {
      title: `${Math.round(bands.level * 100)}% credible band (N = ${bands.N})`
        + (bands.dim > 1 ? ", cross-section" : ""),
      xLabel: "x",
      yLabel: "field value",
    },
  );
  fig.band(xs, lower, upper, BLUE);
  fig.line(xs, mean, BLUE, 2);
  fig.line(xs, truth, ORANGE, 2, "5 3");
  fig.legend([
    ["posterior mean", BLUE],
    ["ground truth", ORANGE],
  ]);
  return fig.render();
}

/** Successive-iterate gap decay of the Oseen surrogate. */
export function renderOseenGaps(gapsText: string): string {
  const gaps: OseenGaps = parseOseenGaps(gapsText);
  const all = gaps.cells.flatMap((c) => c.gaps).filter((g) => g > 0);
  if (all.length === 0) throw new SchemaError("all recorded gaps are zero");
  const maxLen = Math.max(...gaps.cells.map((c) => c.gaps.length));
  const fig = new Figure(
    { min: 1, max: Math.max(maxLen, 2) },
    logExtent(all),
    {
      title: "Oseen iteration: successive-iterate gaps",
      xLabel: "iteration",
      yLabel: "sup-t H2 gap",
      yKind: "log",
    },
  );
  const palette = [BLUE, ORANGE, GREEN, GRAY, "#8d6cab", "#c08552"];
  gaps.cells.forEach((cell, i) => {
    const xs = cell.gaps.map((_, j) => j + 1);
    const ys = cell.gaps.map((g) => (g > 0 ? g : NaN));
    const keep = ys.map((y, j) => [xs[j], y] as const).filter(([, y]) => Number.isFinite(y));
    fig.line(keep.map(([x]) => x), keep.map(([, y]) => y), palette[i % palette.length], 1.8);
    fig.scatter(keep.map(([x]) => x), keep.map(([, y]) => y), palette[i % palette.length], 2.5);
  });
  fig.legend(gaps.cells.slice(0, 4).map((c, i) =>
    [`N=${c.N}, seed=${c.seed}`, palette[i % palette.length]] as [string, string]));
  return fig.render();
}

/** Condition-flag summary: satisfied fraction per condition and N. */
export function renderConditions(csvText: string): string {
  const rows: ResultRow[] = parseResultsCsv(csvText);
  const conditions = ["nm1", "nm2", "mm2"] as const;
  const uniqueNs = [...new Set(rows.map((r) => r.N))].sort((a, b) => a - b);
  const groups = uniqueNs.length * conditions.length;
  const fig = new Figure(
    { min: -0.5, max: groups - 0.5 },
    { min: 0, max: 1.08 },
    {
      title: "misspecification condition flags",
      xLabel: "condition x N",
      yLabel: "satisfied fraction",
    },
  );
  const palette: Record<string, string> = { nm1: BLUE, nm2: GREEN, mm2: ORANGE };
  let idx = 0;
  for (const cond of conditions) {
    for (const n of uniqueNs) {
      const cells = rows.filter((r) => r.N === n);
      const frac = cells.reduce((acc, r) => acc + r[cond], 0) / cells.length;
      fig.bar(idx - 0.35, idx + 0.35, 0, frac, palette[cond]);
      fig.note(fig.x.apply(idx) - 16, fig.y.apply(0) + 30, `${cond}:${n}`);
      idx += 1;
    }
  }
  fig.legend(conditions.map((c) => [c, palette[c]] as [string, string]));
  return fig.render();
}
