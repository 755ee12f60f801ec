/** In-memory description of the model graph.
 *
 * One structure feeds both consumers: the ONNX serializer writes it to disk
 * and the reference interpreter executes it directly, so the file on disk and
 * the numbers we verify against share a single source of truth.
 */

export type AttrValue =
  | { kind: "int"; value: number }
  | { kind: "float"; value: number }
  | { kind: "ints"; value: number[] };

export interface NodeDef {
  opType: string;
  name: string;
  inputs: string[];
  outputs: string[];
  attrs: Record<string, AttrValue>;
}

export interface TensorDef {
  name: string;
  dims: number[];
  /** float32 weights or int64 auxiliary data (shape operands). */
  data: Float32Array | BigInt64Array;
}

export interface ValueDef {
  name: string;
  dims: number[];
}

export interface ModelDef {
  name: string;
  opset: number;
  irVersion: number;
  input: ValueDef;
  /** Graph outputs; the first entries are the taps, in shallow-to-deep order. */
  outputs: ValueDef[];
  tapNames: string[];
  nodes: NodeDef[];
  initializers: TensorDef[];
  /** Per-channel preprocessing constants recorded in the manifest. */
  mean: number[];
  std: number[];
}

export const attrInt = (value: number): AttrValue => ({ kind: "int", value });
export const attrFloat = (value: number): AttrValue => ({ kind: "float", value });
export const attrInts = (value: number[]): AttrValue => ({ kind: "ints", value });

export function elementCount(dims: number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

export function findInitializer(def: ModelDef, name: string): TensorDef {
  const found = def.initializers.find((t) => t.name === name);
  if (!found) throw new Error(`no initializer named ${name}`);
  return found;
}
