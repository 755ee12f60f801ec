/** Hand-rolled ONNX serializer.
 *
 * Writes the protobuf wire format directly: a varint-keyed tag stream with
 * length-delimited submessages. Only the message fields this exporter uses
 * are implemented. Field numbers follow onnx.proto; repeated scalars are
 * written packed, which every conformant protobuf reader accepts.
 */

import { AttrValue, ModelDef, NodeDef, TensorDef, ValueDef } from "./graph";

const WIRE_VARINT = 0;
const WIRE_LEN = 2;
const WIRE_FIXED32 = 5;

const FLOAT = 1; // TensorProto.DataType
const INT64 = 7;

// AttributeProto.AttributeType
const ATTR_FLOAT = 1;
const ATTR_INT = 2;
const ATTR_INTS = 7;

class ByteWriter {
  private chunks: Uint8Array[] = [];
  private length = 0;

  varint(value: number | bigint): void {
    let v = typeof value === "bigint" ? value : BigInt(value);
    if (v < 0n) throw new Error("negative varint not supported");
    const out: number[] = [];
    do {
      let byte = Number(v & 0x7fn);
      v >>= 7n;
      if (v > 0n) byte |= 0x80;
      out.push(byte);
    } while (v > 0n);
    this.push(Uint8Array.from(out));
  }

  tag(field: number, wire: number): void {
    this.varint((field << 3) | wire);
  }

  float32(value: number): void {
    const buf = new Uint8Array(4);
    new DataView(buf.buffer).setFloat32(0, value, true);
    this.push(buf);
  }

  push(bytes: Uint8Array): void {
    this.chunks.push(bytes);
    this.length += bytes.length;
  }

  bytesField(field: number, payload: Uint8Array): void {
    this.tag(field, WIRE_LEN);
    this.varint(payload.length);
    this.push(payload);
  }

  stringField(field: number, text: string): void {
    this.bytesField(field, new TextEncoder().encode(text));
  }

  varintField(field: number, value: number | bigint): void {
    this.tag(field, WIRE_VARINT);
    this.varint(value);
  }

  floatField(field: number, value: number): void {
    this.tag(field, WIRE_FIXED32);
    this.float32(value);
  }

  /** Packed repeated varint field. */
  packedInts(field: number, values: number[]): void {
    const inner = new ByteWriter();
    for (const v of values) inner.varint(v);
    this.bytesField(field, inner.finish());
  }

  messageField(field: number, encode: (w: ByteWriter) => void): void {
    const inner = new ByteWriter();
    encode(inner);
    this.bytesField(field, inner.finish());
  }

  finish(): Uint8Array {
    const out = new Uint8Array(this.length);
    let offset = 0;
    for (const chunk of this.chunks) {
      out.set(chunk, offset);
      offset += chunk.length;
    }
    return out;
  }
}

function rawBytes(tensor: TensorDef): Uint8Array {
  const { data } = tensor;
  const out = new Uint8Array(data.length * (data instanceof BigInt64Array ? 8 : 4));
  const view = new DataView(out.buffer);
  if (data instanceof BigInt64Array) {
    for (let i = 0; i < data.length; i++) view.setBigInt64(i * 8, data[i], true);
  } else {
    for (let i = 0; i < data.length; i++) view.setFloat32(i * 4, data[i], true);
  }
  return out;
}

function writeTensor(w: ByteWriter, tensor: TensorDef): void {
  for (const d of tensor.dims) w.varintField(1, d);
  w.varintField(2, tensor.data instanceof BigInt64Array ? INT64 : FLOAT);
  w.stringField(8, tensor.name);
  w.bytesField(9, rawBytes(tensor));
}

function writeAttribute(w: ByteWriter, name: string, attr: AttrValue): void {
  w.stringField(1, name);
  if (attr.kind === "float") {
    w.floatField(2, attr.value);
  } else if (attr.kind === "int") {
    w.varintField(3, attr.value);
  } else {
    w.packedInts(8, attr.value);
  }
  const typeCode =
    attr.kind === "float" ? ATTR_FLOAT : attr.kind === "int" ? ATTR_INT : ATTR_INTS;
  w.varintField(20, typeCode);
}

function writeNode(w: ByteWriter, node: NodeDef): void {
  for (const name of node.inputs) w.stringField(1, name);
  for (const name of node.outputs) w.stringField(2, name);
  w.stringField(3, node.name);
  w.stringField(4, node.opType);
  for (const [name, attr] of Object.entries(node.attrs)) {
    w.messageField(5, (inner) => writeAttribute(inner, name, attr));
  }
}

function writeValueInfo(w: ByteWriter, value: ValueDef): void {
  w.stringField(1, value.name);
  w.messageField(2, (type) => {
    type.messageField(1, (tensorType) => {
      tensorType.varintField(1, FLOAT);
      tensorType.messageField(2, (shape) => {
        for (const d of value.dims) {
          shape.messageField(1, (dim) => dim.varintField(1, d));
        }
      });
    });
  });
}

function writeGraph(w: ByteWriter, def: ModelDef): void {
  for (const node of def.nodes) w.messageField(1, (inner) => writeNode(inner, node));
  w.stringField(2, def.name);
  for (const tensor of def.initializers) {
    w.messageField(5, (inner) => writeTensor(inner, tensor));
  }
  w.messageField(11, (inner) => writeValueInfo(inner, def.input));
  for (const output of def.outputs) {
    w.messageField(12, (inner) => writeValueInfo(inner, output));
  }
}

/** Serialize the model to ONNX file bytes. */
export function serializeModel(def: ModelDef): Uint8Array {
  const w = new ByteWriter();
  w.varintField(1, def.irVersion);
  w.stringField(2, "backbone-export");
  w.stringField(3, "0.1.0");
  w.messageField(7, (graph) => writeGraph(graph, def));
  w.messageField(8, (opset) => {
    opset.stringField(1, "");
    opset.varintField(2, def.opset);
  });
  return w.finish();
}
