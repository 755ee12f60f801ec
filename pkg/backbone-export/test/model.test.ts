import { describe, expect, it } from "vitest";
import { findInitializer } from "../src/graph";
import { buildModel, MODEL_REGISTRY } from "../src/model";
import { serializeModel } from "../src/onnx";
import { TensorRng } from "../src/rng";

describe("buildModel", () => {
  it("rejects unknown model names", () => {
    expect(() => buildModel("resnet-mega")).toThrow(/unknown model 'resnet-mega'/);
    expect(() => buildModel("resnet-mega")).toThrow(/resnet-micro/);
  });

  it("is deterministic for a fixed seed", () => {
    const a = serializeModel(buildModel("resnet-micro"));
    const b = serializeModel(buildModel("resnet-micro"));
    expect(a.length).toBe(b.length);
    expect(Buffer.from(a).equals(Buffer.from(b))).toBe(true);
  });

  it("changes weights when the seed changes", () => {
    const a = buildModel("resnet-micro");
    const b = buildModel("resnet-micro", 99);
    const wa = findInitializer(a, "stem.conv.weight").data as Float32Array;
    const wb = findInitializer(b, "stem.conv.weight").data as Float32Array;
    expect(wa.length).toBe(wb.length);
    expect(wa[0]).not.toBe(wb[0]);
  });

  it("keys each tensor's stream by its name", () => {
    const def = buildModel("resnet-micro");
    const tensor = findInitializer(def, "stage2.conv1.weight");
    const fanIn = tensor.dims[1] * tensor.dims[2] * tensor.dims[3];
    const expected = new Float32Array(8);
    new TensorRng(MODEL_REGISTRY["resnet-micro"].seed, "stage2.conv1.weight").fillNormal(
      expected,
      Math.sqrt(2 / fanIn),
    );
    for (let i = 0; i < expected.length; i++) {
      expect((tensor.data as Float32Array)[i]).toBe(expected[i]);
    }
  });

  it("declares taps shallow to deep", () => {
    const def = buildModel("resnet-micro");
    expect(def.tapNames).toEqual(["stage2", "stage3"]);
    const dims = def.tapNames.map(
      (name) => def.outputs.find((o) => o.name === name)!.dims,
    );
    expect(dims[0]).toEqual([1, 32, 32, 32]);
    expect(dims[1]).toEqual([1, 64, 16, 16]);
    expect(dims[0][2]).toBeGreaterThan(dims[1][2]);
  });

  it("shapes the residual-stage weights as configured", () => {
    const def = buildModel("resnet-micro");
    expect(findInitializer(def, "stem.conv.weight").dims).toEqual([16, 3, 7, 7]);
    expect(findInitializer(def, "stage2.conv1.weight").dims).toEqual([32, 16, 3, 3]);
    expect(findInitializer(def, "stage2.down.weight").dims).toEqual([32, 16, 1, 1]);
    expect(findInitializer(def, "stage3.conv2.weight").dims).toEqual([64, 64, 3, 3]);
    expect(findInitializer(def, "head.fc.weight").dims).toEqual([10, 64]);
    // stage1 keeps its width, so no projection branch exists
    expect(def.initializers.some((t) => t.name === "stage1.down.weight")).toBe(false);
  });

  it("keeps batch-norm variance strictly positive", () => {
    const def = buildModel("resnet-micro");
    for (const tensor of def.initializers) {
      if (!tensor.name.endsWith(".var")) continue;
      for (const v of tensor.data as Float32Array) expect(v).toBeGreaterThan(0);
    }
  });
});
