/** Deterministic ResNet-style backbone construction.
 *
 * The real pipeline was designed around large pretrained classifiers, but the
 * export tool must run in environments with no weight downloads at all. The
 * registry therefore describes self-contained models whose weights come from
 * a seeded generator: fixed seed in, byte-identical artifact out. The layout
 * mirrors the classifier family the detector was built against: a strided
 * stem, residual stages that halve resolution, taps after the second and
 * third stages, and a small classification head.
 */

import {
  AttrValue,
  ModelDef,
  NodeDef,
  TensorDef,
  attrFloat,
  attrInt,
  attrInts,
} from "./graph";
import { TensorRng } from "./rng";

export interface ModelConfig {
  stemChannels: number;
  stageChannels: [number, number, number];
  classes: number;
  seed: number;
}

export const MODEL_REGISTRY: Record<string, ModelConfig> = {
  "resnet-micro": {
    stemChannels: 16,
    stageChannels: [16, 32, 64],
    classes: 10,
    seed: 0x5ca10de,
  },
};

export const INPUT_NAME = "input";
export const INPUT_SHAPE = [1, 3, 256, 256];
export const OPSET = 13;
export const IR_VERSION = 8;
const BN_EPSILON = 1e-5;

// Preprocessing constants of the classifier family this stands in for.
const MEAN = [0.485, 0.456, 0.406];
const STD = [0.229, 0.224, 0.225];

class Builder {
  nodes: NodeDef[] = [];
  initializers: TensorDef[] = [];

  constructor(private readonly seed: number) {}

  private weight(name: string, dims: number[], std: number): string {
    const data = new Float32Array(dims.reduce((a, b) => a * b, 1));
    new TensorRng(this.seed, name).fillNormal(data, std);
    this.initializers.push({ name, dims, data });
    return name;
  }

  private node(
    opType: string,
    name: string,
    inputs: string[],
    outputs: string[],
    attrs: Record<string, AttrValue> = {},
  ): void {
    this.nodes.push({ opType, name, inputs, outputs, attrs });
  }

  conv(
    name: string,
    input: string,
    output: string,
    inChannels: number,
    outChannels: number,
    kernel: number,
    stride: number,
    pad: number,
  ): void {
    const fanIn = inChannels * kernel * kernel;
    const w = this.weight(
      `${name}.weight`,
      [outChannels, inChannels, kernel, kernel],
      Math.sqrt(2 / fanIn),
    );
    this.node("Conv", name, [input, w], [output], {
      kernel_shape: attrInts([kernel, kernel]),
      strides: attrInts([stride, stride]),
      pads: attrInts([pad, pad, pad, pad]),
      dilations: attrInts([1, 1]),
      group: attrInt(1),
    });
  }

  batchNorm(name: string, input: string, output: string, channels: number): void {
    const param = (suffix: string, fill: (rng: TensorRng) => number): string => {
      const tensorName = `${name}.${suffix}`;
      const rng = new TensorRng(this.seed, tensorName);
      const data = new Float32Array(channels);
      for (let i = 0; i < channels; i++) data[i] = fill(rng);
      this.initializers.push({ name: tensorName, dims: [channels], data });
      return tensorName;
    };
    const scale = param("scale", (rng) => 1 + 0.1 * rng.normal());
    const bias = param("bias", (rng) => 0.1 * rng.normal());
    // Stand-ins for accumulated batch statistics; variance kept positive.
    const mean = param("mean", (rng) => 0.1 * rng.normal());
    const variance = param("var", (rng) => Math.exp(0.25 * rng.normal()));
    this.node("BatchNormalization", name, [input, scale, bias, mean, variance], [output], {
      epsilon: attrFloat(BN_EPSILON),
      momentum: attrFloat(0.9),
    });
  }

  relu(name: string, input: string, output: string): void {
    this.node("Relu", name, [input], [output]);
  }

  maxPool(name: string, input: string, output: string): void {
    this.node("MaxPool", name, [input], [output], {
      kernel_shape: attrInts([3, 3]),
      strides: attrInts([2, 2]),
      pads: attrInts([1, 1, 1, 1]),
    });
  }

  /** Basic residual block; a strided 1x1 projection when shape changes. */
  block(
    name: string,
    input: string,
    output: string,
    inChannels: number,
    outChannels: number,
    stride: number,
  ): void {
    this.conv(`${name}.conv1`, input, `${name}.conv1.out`, inChannels, outChannels, 3, stride, 1);
    this.batchNorm(`${name}.bn1`, `${name}.conv1.out`, `${name}.bn1.out`, outChannels);
    this.relu(`${name}.relu1`, `${name}.bn1.out`, `${name}.relu1.out`);
    this.conv(`${name}.conv2`, `${name}.relu1.out`, `${name}.conv2.out`, outChannels, outChannels, 3, 1, 1);
    this.batchNorm(`${name}.bn2`, `${name}.conv2.out`, `${name}.bn2.out`, outChannels);

    let shortcut = input;
    if (stride !== 1 || inChannels !== outChannels) {
      this.conv(`${name}.down`, input, `${name}.down.out`, inChannels, outChannels, 1, stride, 0);
      this.batchNorm(`${name}.downbn`, `${name}.down.out`, `${name}.downbn.out`, outChannels);
      shortcut = `${name}.downbn.out`;
    }
    this.node("Add", `${name}.add`, [`${name}.bn2.out`, shortcut], [`${name}.sum`]);
    this.relu(`${name}.relu2`, `${name}.sum`, output);
  }

  head(name: string, input: string, output: string, channels: number, classes: number): void {
    this.node("GlobalAveragePool", `${name}.pool`, [input], [`${name}.pool.out`]);
    this.node("Flatten", `${name}.flatten`, [`${name}.pool.out`], [`${name}.flat`], {
      axis: attrInt(1),
    });
    const w = this.weight(`${name}.fc.weight`, [classes, channels], Math.sqrt(1 / channels));
    const b = this.weight(`${name}.fc.bias`, [classes], 0.1);
    this.node("Gemm", `${name}.fc`, [`${name}.flat`, w, b], [output], {
      alpha: attrFloat(1),
      beta: attrFloat(1),
      transB: attrInt(1),
    });
  }
}

/** Assemble the named model with its seeded weights. */
export function buildModel(name: string, seedOverride?: number): ModelDef {
  const config = MODEL_REGISTRY[name];
  if (!config) {
    const known = Object.keys(MODEL_REGISTRY).join(", ");
    throw new Error(`unknown model '${name}' (available: ${known})`);
  }
  const seed = seedOverride ?? config.seed;
  const [c1, c2, c3] = config.stageChannels;
  const b = new Builder(seed);

  b.conv("stem.conv", INPUT_NAME, "stem.conv.out", 3, config.stemChannels, 7, 2, 3);
  b.batchNorm("stem.bn", "stem.conv.out", "stem.bn.out", config.stemChannels);
  b.relu("stem.relu", "stem.bn.out", "stem.relu.out");
  b.maxPool("stem.pool", "stem.relu.out", "stem.pool.out");

  b.block("stage1", "stem.pool.out", "stage1", config.stemChannels, c1, 1);
  b.block("stage2", "stage1", "stage2", c1, c2, 2);
  b.block("stage3", "stage2", "stage3", c2, c3, 2);
  b.head("head", "stage3", "logits", c3, config.classes);

  const side = INPUT_SHAPE[3];
  return {
    name,
    opset: OPSET,
    irVersion: IR_VERSION,
    input: { name: INPUT_NAME, dims: [...INPUT_SHAPE] },
    outputs: [
      { name: "stage2", dims: [1, c2, side / 8, side / 8] },
      { name: "stage3", dims: [1, c3, side / 16, side / 16] },
      { name: "logits", dims: [1, config.classes] },
    ],
    tapNames: ["stage2", "stage3"],
    nodes: b.nodes,
    initializers: b.initializers,
    mean: [...MEAN],
    std: [...STD],
  };
}
