/** One-shot export: build the model, write the ONNX file and its sidecar. */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { ModelDef } from "./graph";
import { ExportManifest, buildManifest } from "./manifest";
import { buildModel } from "./model";
import { serializeModel } from "./onnx";
import { runReference, zerosTensor } from "./reference";

export interface ExportResult {
  modelPath: string;
  manifestPath: string;
  manifest: ExportManifest;
  bytes: number;
}

/** Compare declared tap shapes against an actual forward pass. */
function checkShapes(def: ModelDef): void {
  const zero = zerosTensor(def.input.dims);
  const produced = runReference(def, zero, def.tapNames);
  for (const name of def.tapNames) {
    const declared = def.outputs.find((o) => o.name === name)!.dims;
    const actual = produced.get(name)!.dims;
    if (declared.length !== actual.length || declared.some((d, i) => d !== actual[i])) {
      throw new Error(
        `export verification failed: tap ${name} declares [${declared}] but computes [${actual}]`,
      );
    }
  }
}

export function exportModel(name: string, outDir: string, seed?: number): ExportResult {
  const def = buildModel(name, seed);
  checkShapes(def);
  const bytes = serializeModel(def);
  mkdirSync(outDir, { recursive: true });
  const modelPath = join(outDir, "model.onnx");
  writeFileSync(modelPath, bytes);
  const manifest = buildManifest(def, bytes);
  const manifestPath = join(outDir, "manifest.json");
  writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + "\n");
  return { modelPath, manifestPath, manifest, bytes: bytes.length };
}
