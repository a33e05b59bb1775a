/**
 * simdd-figures --kind <convergence|mse|ber> --in <csv> --out <svg>
 *
 * Reads one harness CSV and writes the corresponding SVG figure. The
 * input is never modified; re-running with the same input reproduces the
 * same output byte for byte.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { CsvError } from "./csv.js";
import { convergenceFigure, linkFigure, sensingFigure } from "./figures.js";

const BUILDERS: Record<string, (text: string, source: string) => string> = {
  convergence: convergenceFigure,
  mse: sensingFigure,
  ber: linkFigure,
};

export interface CliOptions {
  kind: string;
  input: string;
  output: string;
}

export function parseArgs(argv: string[]): CliOptions {
  let kind: string | undefined;
  let input: string | undefined;
  let output: string | undefined;
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) {
      throw new Error(`missing value for ${flag}`);
    }
    if (flag === "--kind") kind = value;
    else if (flag === "--in") input = value;
    else if (flag === "--out") output = value;
    else throw new Error(`unknown flag ${flag}`);
  }
  if (!kind || !(kind in BUILDERS)) {
    throw new Error(`--kind must be one of ${Object.keys(BUILDERS).join(", ")}`);
  }
  if (!input || !output) {
    throw new Error("--in and --out are required");
  }
  return { kind, input, output };
}

export function run(argv: string[]): number {
  let options: CliOptions;
  try {
    options = parseArgs(argv);
  } catch (error) {
    console.error(`error: ${(error as Error).message}`);
    return 2;
  }
  try {
    const text = readFileSync(options.input, "utf-8");
    const svg = BUILDERS[options.kind](text, options.input);
    writeFileSync(options.output, svg);
    console.log(`wrote ${options.output}`);
    return 0;
  } catch (error) {
    if (error instanceof CsvError || error instanceof Error) {
      console.error(`error: ${error.message}`);
      return 1;
    }
    throw error;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(run(process.argv.slice(2)));
}
