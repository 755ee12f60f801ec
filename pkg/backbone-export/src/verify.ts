/** Cross-runtime check of an exported model directory.
 *
 * Loads the artifact with onnxruntime, confirms the signature the sidecar
 * promises, then feeds a zero image through both the runtime and the
 * reference interpreter and compares the tap outputs elementwise.
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";
import * as ort from "onnxruntime-node";
import { assertManifest, ExportManifest, sha256Hex } from "./manifest";
import { buildModel } from "./model";
import { maxAbsDiff, runReference, Tensor, zerosTensor } from "./reference";

export interface VerifyReport {
  manifest: ExportManifest;
  hashMatches: boolean;
  /** Worst elementwise gap across both taps. */
  maxTapDiff: number;
  logitsDiff: number;
  tolerance: number;
}

export async function verifyExport(
  outDir: string,
  tolerance = 1e-4,
  seed?: number,
): Promise<VerifyReport> {
  const manifest = assertManifest(
    JSON.parse(readFileSync(join(outDir, "manifest.json"), "utf-8")),
  );
  const fileBytes = readFileSync(join(outDir, "model.onnx"));
  const hashMatches = sha256Hex(fileBytes) === manifest.sha256;
  if (!hashMatches) {
    throw new Error("model.onnx does not match the hash recorded in manifest.json");
  }

  const session = await ort.InferenceSession.create(join(outDir, "model.onnx"));
  if (session.inputNames.length !== 1 || session.inputNames[0] !== manifest.input_name) {
    throw new Error(
      `model inputs [${session.inputNames}] do not match manifest input ${manifest.input_name}`,
    );
  }
  for (const tap of manifest.tap_names) {
    if (!session.outputNames.includes(tap)) {
      throw new Error(`tap output ${tap} is missing from the model graph`);
    }
  }

  const def = buildModel(manifest.model_name, seed);
  const zero = zerosTensor(manifest.input_shape);
  const wanted = [...manifest.tap_names, "logits"];
  const expected = runReference(def, zero, wanted);

  const feeds: Record<string, ort.Tensor> = {
    [manifest.input_name]: new ort.Tensor("float32", zero.data, manifest.input_shape),
  };
  const results = await session.run(feeds, wanted);

  let maxTapDiff = 0;
  manifest.tap_names.forEach((tap, i) => {
    const got = results[tap];
    const dims = [1, ...manifest.tap_shapes[i]];
    if (got.dims.length !== dims.length || got.dims.some((d, j) => d !== dims[j])) {
      throw new Error(`tap ${tap} has shape [${got.dims}], manifest says [${dims}]`);
    }
    const asTensor: Tensor = { dims: [...got.dims], data: got.data as Float32Array };
    maxTapDiff = Math.max(maxTapDiff, maxAbsDiff(asTensor, expected.get(tap)!));
  });
  const logits = results["logits"];
  const logitsDiff = maxAbsDiff(
    { dims: [...logits.dims], data: logits.data as Float32Array },
    expected.get("logits")!,
  );

  if (maxTapDiff > tolerance) {
    throw new Error(
      `tap outputs differ from the reference by ${maxTapDiff}, tolerance ${tolerance}`,
    );
  }
  return { manifest, hashMatches, maxTapDiff, logitsDiff, tolerance };
}
