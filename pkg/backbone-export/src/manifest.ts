/** The JSON sidecar contract shared with the detector's feature extractor.
 *
 * The detector reads `manifest.json` next to the model file and requires
 * input_name, input_shape, tap_names, tap_shapes, mean and std. On top of
 * those this tool records the model name, the opset and the file hash, so a
 * checked-in artifact can be re-verified without the exporter present.
 */

import { createHash } from "node:crypto";
import { ModelDef } from "./graph";

export interface ExportManifest {
  model_name: string;
  input_name: string;
  input_shape: number[];
  tap_names: string[];
  /** (C, h, w) per tap, ordered shallow to deep. */
  tap_shapes: number[][];
  mean: number[];
  std: number[];
  opset: number;
  sha256: string;
}

export function sha256Hex(bytes: Uint8Array): string {
  return createHash("sha256").update(bytes).digest("hex");
}

export function buildManifest(def: ModelDef, fileBytes: Uint8Array): ExportManifest {
  const taps = def.tapNames.map((name) => {
    const value = def.outputs.find((o) => o.name === name);
    if (!value) throw new Error(`tap ${name} is not a graph output`);
    return value.dims.slice(1); // drop the batch dimension
  });
  return {
    model_name: def.name,
    input_name: def.input.name,
    input_shape: [...def.input.dims],
    tap_names: [...def.tapNames],
    tap_shapes: taps,
    mean: [...def.mean],
    std: [...def.std],
    opset: def.opset,
    sha256: sha256Hex(fileBytes),
  };
}

function expectArray(value: unknown, key: string, length: number): number[] {
  if (!Array.isArray(value) || value.length !== length || !value.every((v) => typeof v === "number")) {
    throw new Error(`manifest ${key} must be a numeric array of length ${length}`);
  }
  return value as number[];
}

/** Validate a parsed manifest read back from disk. */
export function assertManifest(raw: unknown): ExportManifest {
  if (typeof raw !== "object" || raw === null) throw new Error("manifest is not an object");
  const m = raw as Record<string, unknown>;
  for (const key of ["model_name", "input_name", "sha256"]) {
    if (typeof m[key] !== "string" || (m[key] as string).length === 0) {
      throw new Error(`manifest ${key} must be a non-empty string`);
    }
  }
  if (typeof m.opset !== "number") throw new Error("manifest opset must be a number");
  expectArray(m.input_shape, "input_shape", 4);
  expectArray(m.mean, "mean", 3);
  expectArray(m.std, "std", 3);
  const names = m.tap_names;
  if (!Array.isArray(names) || names.length !== 2 || !names.every((n) => typeof n === "string")) {
    throw new Error("manifest tap_names must be two strings");
  }
  const shapes = m.tap_shapes;
  if (!Array.isArray(shapes) || shapes.length !== 2) {
    throw new Error("manifest tap_shapes must list two shapes");
  }
  shapes.forEach((shape, i) => expectArray(shape, `tap_shapes[${i}]`, 3));
  const [shallow, deep] = shapes as number[][];
  if (!(shallow[1] > deep[1] && shallow[2] > deep[2])) {
    throw new Error("manifest tap_shapes must be ordered shallow to deep");
  }
  return m as unknown as ExportManifest;
}
