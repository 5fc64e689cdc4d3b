/**
 * Parsing and validation of the experiment artifacts:
 * results.csv (fixed column schema), summary.json, bands.json,
 * oseen_gaps.json.  Figures never recompute statistics — every number is
 * read from these files.
 */

export const CSV_COLUMNS = [
  "experiment", "N", "seed", "l2_mean", "l2_map", "d_g_mean",
  "accept_rate", "runtime_s", "nm1", "nm2", "mm2",
] as const;

export interface ResultRow {
  experiment: string;
  N: number;
  seed: number;
  l2_mean: number;
  l2_map: number;
  d_g_mean: number;
  accept_rate: number;
  runtime_s: number;
  nm1: number;
  nm2: number;
  mm2: number;
}

export interface RateFit {
  Ns: number[];
  errors: number[];
  slope: number;
  intercept: number;
  r2: number;
}

export interface Summary {
  experiment: string;
  theoretical_slope: number;
  rate?: RateFit;
  median_l2_mean: Record<string, number>;
}

export interface BandsArtifact {
  level: number;
  N: number;
  seed: number;
  dim: number;
  resolution: number;
  lower: number[];
  upper: number[];
  mean: number[];
  truth: number[];
}

export interface OseenGaps {
  cells: { N: number; seed: number; gaps: number[] }[];
}

export class SchemaError extends Error {}

export function parseResultsCsv(text: string): ResultRow[] {
  const lines = text.split(/\r?\n/).filter((ln) => ln.trim().length > 0);
  if (lines.length === 0) {
    throw new SchemaError("results CSV is empty");
  }
  const header = lines[0].split(",");
  for (let i = 0; i < CSV_COLUMNS.length; i++) {
    if (header[i] !== CSV_COLUMNS[i]) {
      throw new SchemaError(
        `unexpected column ${i}: got ${JSON.stringify(header[i])}, ` +
        `want "${CSV_COLUMNS[i]}"`,
      );
    }
  }
  if (header.length !== CSV_COLUMNS.length) {
    throw new SchemaError(`expected ${CSV_COLUMNS.length} columns, got ${header.length}`);
  }
  const rows: ResultRow[] = [];
  for (const line of lines.slice(1)) {
    const parts = line.split(",");
    if (parts.length !== CSV_COLUMNS.length) {
      throw new SchemaError(`row has ${parts.length} fields: ${line}`);
    }
    const num = (idx: number): number => {
      const v = Number(parts[idx]);
      if (Number.isNaN(v) && parts[idx] !== "nan") {
        throw new SchemaError(`column "${CSV_COLUMNS[idx]}" is not numeric: ${parts[idx]}`);
      }
      return v;
    };
    rows.push({
      experiment: parts[0],
      N: num(1),
      seed: num(2),
      l2_mean: num(3),
      l2_map: num(4),
      d_g_mean: num(5),
      accept_rate: num(6),
      runtime_s: num(7),
      nm1: num(8),
      nm2: num(9),
      mm2: num(10),
    });
  }
  if (rows.length === 0) {
    throw new SchemaError("results CSV has no data rows");
  }
  return rows;
}

function requireKeys(obj: Record<string, unknown>, keys: string[], what: string): void {
  for (const key of keys) {
    if (!(key in obj)) {
      throw new SchemaError(`${what} is missing "${key}"`);
    }
  }
}

export function parseSummary(text: string): Summary {
  const obj = JSON.parse(text) as Record<string, unknown>;
  requireKeys(obj, ["experiment", "theoretical_slope", "median_l2_mean"], "summary");
  return obj as unknown as Summary;
}

export function parseBands(text: string): BandsArtifact {
  const obj = JSON.parse(text) as Record<string, unknown>;
  requireKeys(obj, ["level", "dim", "resolution", "lower", "upper", "mean", "truth"],
    "bands artifact");
  const bands = obj as unknown as BandsArtifact;
  const sizes = [bands.lower.length, bands.upper.length, bands.mean.length,
    bands.truth.length];
  if (new Set(sizes).size !== 1) {
    throw new SchemaError(`bands arrays disagree in length: ${sizes.join(", ")}`);
  }
  return bands;
}

export function parseOseenGaps(text: string): OseenGaps {
  const obj = JSON.parse(text) as Record<string, unknown>;
  requireKeys(obj, ["cells"], "oseen gaps artifact");
  const gaps = obj as unknown as OseenGaps;
  if (!Array.isArray(gaps.cells) || gaps.cells.length === 0) {
    throw new SchemaError("oseen gaps artifact has no cells");
  }
  for (const cell of gaps.cells) {
    if (!Array.isArray(cell.gaps) || cell.gaps.length === 0) {
      throw new SchemaError(`cell N=${cell.N} seed=${cell.seed} has no gaps`);
    }
  }
  return gaps;
}
