/** Reference forward pass used to validate the exported file.
 *
 * A small NCHW interpreter over the same graph structure the serializer
 * writes. Activations are stored in float32 like the runtime's, while the
 * per-element accumulation runs in double precision; agreement with
 * onnxruntime is then expected well inside the 1e-4 verification gate.
 */

import { ModelDef, NodeDef, TensorDef } from "./graph";

export interface Tensor {
  dims: number[];
  data: Float32Array;
}

export function zerosTensor(dims: number[]): Tensor {
  return { dims, data: new Float32Array(dims.reduce((a, b) => a * b, 1)) };
}

function ints(node: NodeDef, name: string, fallback?: number[]): number[] {
  const attr = node.attrs[name];
  if (!attr) {
    if (fallback) return fallback;
    throw new Error(`${node.name}: missing attribute ${name}`);
  }
  if (attr.kind !== "ints") throw new Error(`${node.name}: ${name} is not an int list`);
  return attr.value;
}

function floatAttr(node: NodeDef, name: string, fallback: number): number {
  const attr = node.attrs[name];
  if (!attr) return fallback;
  if (attr.kind !== "float") throw new Error(`${node.name}: ${name} is not a float`);
  return attr.value;
}

function conv(node: NodeDef, input: Tensor, weight: Tensor): Tensor {
  const [, inC, inH, inW] = input.dims;
  const [outC, wC, kH, kW] = weight.dims;
  if (wC !== inC) throw new Error(`${node.name}: channel mismatch (${wC} vs ${inC})`);
  const [sH, sW] = ints(node, "strides", [1, 1]);
  const [pT, pL, pB, pR] = ints(node, "pads", [0, 0, 0, 0]);
  const outH = Math.floor((inH + pT + pB - kH) / sH) + 1;
  const outW = Math.floor((inW + pL + pR - kW) / sW) + 1;
  const out = zerosTensor([1, outC, outH, outW]);
  const x = input.data;
  const w = weight.data;
  for (let oc = 0; oc < outC; oc++) {
    const wBase = oc * inC * kH * kW;
    for (let oy = 0; oy < outH; oy++) {
      for (let ox = 0; ox < outW; ox++) {
        let acc = 0;
        for (let ic = 0; ic < inC; ic++) {
          const xBase = (ic * inH) * inW;
          const wChan = wBase + ic * kH * kW;
          for (let ky = 0; ky < kH; ky++) {
            const iy = oy * sH - pT + ky;
            if (iy < 0 || iy >= inH) continue;
            const xRow = xBase + iy * inW;
            const wRow = wChan + ky * kW;
            for (let kx = 0; kx < kW; kx++) {
              const ix = ox * sW - pL + kx;
              if (ix < 0 || ix >= inW) continue;
              acc += x[xRow + ix] * w[wRow + kx];
            }
          }
        }
        out.data[(oc * outH + oy) * outW + ox] = acc;
      }
    }
  }
  return out;
}

function batchNorm(node: NodeDef, input: Tensor, params: Tensor[]): Tensor {
  const [scale, bias, mean, variance] = params;
  const eps = floatAttr(node, "epsilon", 1e-5);
  const [, channels, height, width] = input.dims;
  const out = zerosTensor(input.dims);
  const plane = height * width;
  for (let c = 0; c < channels; c++) {
    const k = scale.data[c] / Math.sqrt(variance.data[c] + eps);
    const b = bias.data[c] - k * mean.data[c];
    const base = c * plane;
    for (let i = 0; i < plane; i++) out.data[base + i] = k * input.data[base + i] + b;
  }
  return out;
}

function relu(input: Tensor): Tensor {
  const out = zerosTensor(input.dims);
  for (let i = 0; i < input.data.length; i++) out.data[i] = Math.max(0, input.data[i]);
  return out;
}

function maxPool(node: NodeDef, input: Tensor): Tensor {
  const [, channels, inH, inW] = input.dims;
  const [kH, kW] = ints(node, "kernel_shape");
  const [sH, sW] = ints(node, "strides", [1, 1]);
  const [pT, pL, pB, pR] = ints(node, "pads", [0, 0, 0, 0]);
  const outH = Math.floor((inH + pT + pB - kH) / sH) + 1;
  const outW = Math.floor((inW + pL + pR - kW) / sW) + 1;
  const out = zerosTensor([1, channels, outH, outW]);
  for (let c = 0; c < channels; c++) {
    const base = c * inH * inW;
    for (let oy = 0; oy < outH; oy++) {
      for (let ox = 0; ox < outW; ox++) {
        let best = -Infinity;
        for (let ky = 0; ky < kH; ky++) {
          const iy = oy * sH - pT + ky;
          if (iy < 0 || iy >= inH) continue;
          for (let kx = 0; kx < kW; kx++) {
            const ix = ox * sW - pL + kx;
            if (ix < 0 || ix >= inW) continue;
            const v = input.data[base + iy * inW + ix];
            if (v > best) best = v;
          }
        }
        out.data[(c * outH + oy) * outW + ox] = best;
      }
    }
  }
  return out;
}

function add(node: NodeDef, a: Tensor, b: Tensor): Tensor {
  if (a.data.length !== b.data.length) {
    throw new Error(`${node.name}: addend sizes differ`);
  }
  const out = zerosTensor(a.dims);
  for (let i = 0; i < a.data.length; i++) out.data[i] = a.data[i] + b.data[i];
  return out;
}

function globalAveragePool(input: Tensor): Tensor {
  const [, channels, height, width] = input.dims;
  const plane = height * width;
  const out = zerosTensor([1, channels, 1, 1]);
  for (let c = 0; c < channels; c++) {
    let acc = 0;
    const base = c * plane;
    for (let i = 0; i < plane; i++) acc += input.data[base + i];
    out.data[c] = acc / plane;
  }
  return out;
}

function flatten(input: Tensor): Tensor {
  return { dims: [1, input.data.length], data: input.data };
}

function gemm(node: NodeDef, a: Tensor, b: Tensor, c: Tensor): Tensor {
  const transB = node.attrs["transB"];
  if (!transB || transB.kind !== "int" || transB.value !== 1) {
    throw new Error(`${node.name}: only transB=1 is implemented`);
  }
  const k = a.dims[1];
  const n = b.dims[0];
  if (b.dims[1] !== k) throw new Error(`${node.name}: inner dimensions differ`);
  const out = zerosTensor([1, n]);
  for (let j = 0; j < n; j++) {
    let acc = c.data[j];
    for (let i = 0; i < k; i++) acc += a.data[i] * b.data[j * k + i];
    out.data[j] = acc;
  }
  return out;
}

/** Execute the graph on one input, returning the requested named tensors. */
export function runReference(
  def: ModelDef,
  input: Tensor,
  wanted: string[],
): Map<string, Tensor> {
  const env = new Map<string, Tensor>();
  env.set(def.input.name, input);
  for (const tensor of def.initializers) {
    if (tensor.data instanceof BigInt64Array) continue;
    env.set(tensor.name, { dims: tensor.dims, data: tensor.data });
  }
  const fetch = (name: string): Tensor => {
    const found = env.get(name);
    if (!found) throw new Error(`tensor ${name} has not been produced yet`);
    return found;
  };

  for (const node of def.nodes) {
    const args = node.inputs.map(fetch);
    let result: Tensor;
    switch (node.opType) {
      case "Conv":
        result = conv(node, args[0], args[1]);
        break;
      case "BatchNormalization":
        result = batchNorm(node, args[0], args.slice(1));
        break;
      case "Relu":
        result = relu(args[0]);
        break;
      case "MaxPool":
        result = maxPool(node, args[0]);
        break;
      case "Add":
        result = add(node, args[0], args[1]);
        break;
      case "GlobalAveragePool":
        result = globalAveragePool(args[0]);
        break;
      case "Flatten":
        result = flatten(args[0]);
        break;
      case "Gemm":
        result = gemm(node, args[0], args[1], args[2]);
        break;
      default:
        throw new Error(`op ${node.opType} is not implemented in the reference runner`);
    }
    env.set(node.outputs[0], result);
  }

  const out = new Map<string, Tensor>();
  for (const name of wanted) out.set(name, fetch(name));
  return out;
}

/** Largest absolute elementwise difference between two tensors. */
export function maxAbsDiff(a: Tensor, b: Tensor): number {
  if (a.data.length !== b.data.length) {
    throw new Error(`size mismatch: ${a.data.length} vs ${b.data.length}`);
  }
  let worst = 0;
  for (let i = 0; i < a.data.length; i++) {
    const diff = Math.abs(a.data[i] - b.data[i]);
    if (diff > worst) worst = diff;
  }
  return worst;
}
