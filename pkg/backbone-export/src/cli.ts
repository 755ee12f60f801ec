#!/usr/bin/env node
/** Command line wrapper: export, then verify, then report. */

import { exportModel } from "./export";
import { MODEL_REGISTRY } from "./model";
import { verifyExport } from "./verify";

export interface CliOptions {
  model: string;
  out: string;
  seed?: number;
  tolerance: number;
  skipVerify: boolean;
}

export function parseArgs(argv: string[]): CliOptions {
  const options: CliOptions = {
    model: "resnet-micro",
    out: "out",
    tolerance: 1e-4,
    skipVerify: false,
  };
  const queue = [...argv];
  const positional: string[] = [];
  while (queue.length > 0) {
    const arg = queue.shift()!;
    if (arg === "--out") {
      options.out = expectValue(queue, arg);
    } else if (arg === "--seed") {
      options.seed = expectNumber(queue, arg);
    } else if (arg === "--tolerance") {
      options.tolerance = expectNumber(queue, arg);
    } else if (arg === "--skip-verify") {
      options.skipVerify = true;
    } else if (arg === "--help" || arg === "-h") {
      printUsage();
      process.exit(0);
    } else if (arg.startsWith("-")) {
      throw new Error(`unknown option ${arg}`);
    } else {
      positional.push(arg);
    }
  }
  if (positional.length > 1) throw new Error("at most one model name expected");
  if (positional.length === 1) options.model = positional[0];
  return options;
}

function expectValue(queue: string[], flag: string): string {
  const value = queue.shift();
  if (value === undefined) throw new Error(`${flag} needs a value`);
  return value;
}

function expectNumber(queue: string[], flag: string): number {
  const value = Number(expectValue(queue, flag));
  if (!Number.isFinite(value)) throw new Error(`${flag} needs a number`);
  return value;
}

function printUsage(): void {
  const names = Object.keys(MODEL_REGISTRY).join(" | ");
  console.log(
    [
      "usage: backbone-export [model] [--out DIR] [--seed N] [--tolerance X] [--skip-verify]",
      `  model: ${names} (default resnet-micro)`,
      "  writes model.onnx and manifest.json into DIR (default ./out),",
      "  then checks the file against the reference forward pass.",
    ].join("\n"),
  );
}

export async function run(argv: string[]): Promise<void> {
  const options = parseArgs(argv);
  const result = exportModel(options.model, options.out, options.seed);
  console.log(
    `wrote ${result.modelPath} (${result.bytes} bytes, sha256 ${result.manifest.sha256.slice(0, 12)}...)`,
  );
  console.log(`wrote ${result.manifestPath}`);
  const taps = result.manifest.tap_names
    .map((name, i) => `${name} (${result.manifest.tap_shapes[i].join("x")})`)
    .join(", ");
  console.log(`taps: ${taps}`);
  if (options.skipVerify) {
    console.log("verification skipped");
    return;
  }
  const report = await verifyExport(options.out, options.tolerance, options.seed);
  console.log(
    `verify: zero-image taps match the reference within ${report.maxTapDiff.toExponential(2)}` +
      ` (tolerance ${report.tolerance}), logits within ${report.logitsDiff.toExponential(2)}`,
  );
  console.log("ok");
}

if (require.main === module) {
  run(process.argv.slice(2)).catch((error: Error) => {
    console.error(`error: ${error.message}`);
    process.exit(1);
  });
}
