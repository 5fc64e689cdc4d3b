/**
 * figures <kind> --in <path> --out <file> [--summary <json>]
 *
 * kinds: rate (results.csv + summary.json), bands (bands.json),
 * oseen_gaps (oseen_gaps.json), conditions (results.csv).
 * The summary defaults to summary.json next to the CSV.
 */

import { readFileSync, writeFileSync, existsSync } from "node:fs";
import { dirname, join } from "node:path";

import {
  FIGURE_KINDS,
  FigureKind,
  renderBands,
  renderConditions,
  renderOseenGaps,
  renderRate,
} from "./figures.js";

interface Args {
  kind: FigureKind;
  input: string;
  output: string;
  summary?: string;
}

export function parseArgs(argv: string[]): Args {
  const [kind, ...rest] = argv;
  if (!FIGURE_KINDS.includes(kind as FigureKind)) {
    throw new Error(`figure kind must be one of ${FIGURE_KINDS.join(", ")}; got "${kind}"`);
  }
  const flags = new Map<string, string>();
  for (let i = 0; i < rest.length; i += 2) {
    const key = rest[i];
    const val = rest[i + 1];
    if (!key?.startsWith("--") || val === undefined) {
      throw new Error(`malformed flag pair near "${key}"`);
    }
    flags.set(key.slice(2), val);
  }
  const input = flags.get("in");
  const output = flags.get("out");
  if (!input || !output) {
    throw new Error("both --in and --out are required");
  }
  return { kind: kind as FigureKind, input, output, summary: flags.get("summary") };
}

export function renderFigure(args: Args): string {
  const text = readFileSync(args.input, "utf-8");
  switch (args.kind) {
    case "rate": {
      const summaryPath = args.summary ?? join(dirname(args.input), "summary.json");
      if (!existsSync(summaryPath)) {
        throw new Error(`summary JSON not found at ${summaryPath}; pass --summary`);
      }
      return renderRate(text, readFileSync(summaryPath, "utf-8"));
    }
    case "bands":
      return renderBands(text);
    case "oseen_gaps":
      return renderOseenGaps(text);
    case "conditions":
      return renderConditions(text);
  }
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 2;
  }
  try {
    const svg = renderFigure(args);
    writeFileSync(args.output, svg, "utf-8");
    console.log(`wrote ${args.output}`);
    return 0;
  } catch (err) {
    // no partial file on error
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
}

const isDirectRun = process.argv[1]?.endsWith("cli.ts")
  || process.argv[1]?.endsWith("cli.js");
if (isDirectRun) {
  process.exit(main(process.argv.slice(2)));
}
