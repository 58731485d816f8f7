// Wire-form encoding shared with the fuzzing engine: tagged value objects,
// trace records, and output digests. Field names and tags are normative.

import { Dtype, Tensor, elementCount } from "./toylib";

export type WireValue =
  | { t: "tensor"; shape: number[]; dtype: string; seed: number }
  | { t: "int"; v: number }
  | { t: "float"; v: number }
  | { t: "bool"; v: boolean }
  | { t: "str"; v: string }
  | { t: "tuple"; items: WireValue[] }
  | { t: "list"; items: WireValue[] }
  | { t: "raw"; repr: string };

export interface TraceRecord {
  api: string;
  source: "doc" | "test" | "model";
  args: { name: string; value: WireValue }[];
}

function isTensor(v: unknown): v is Tensor {
  return (
    typeof v === "object" &&
    v !== null &&
    Array.isArray((v as Tensor).shape) &&
    (v as Tensor).data instanceof Float64Array
  );
}

// Runtime values -> wire form. Tensors are reduced to shape and dtype; the
// seed only labels the record (concrete elements are never shipped).
export function encodeValue(v: unknown, seed = 0): WireValue {
  if (isTensor(v)) {
    return { t: "tensor", shape: [...v.shape], dtype: v.dtype, seed };
  }
  if (typeof v === "number") {
    return Number.isInteger(v) ? { t: "int", v } : { t: "float", v };
  }
  if (typeof v === "boolean") return { t: "bool", v };
  if (typeof v === "string") return { t: "str", v };
  if (Array.isArray(v)) return { t: "list", items: v.map((x) => encodeValue(x, seed)) };
  return { t: "raw", repr: String(v) };
}

// ---------------------------------------------------------------------------
// Deterministic materialization (counter-based splitmix64, [0.5, 1.5) floats)
// ---------------------------------------------------------------------------

const MASK64 = (1n << 64n) - 1n;
const GAMMA = 0x9e3779b97f4b9c15n;

function mix(z: bigint): bigint {
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  return z ^ (z >> 31n);
}

export class Rng {
  private counter = 0n;

  constructor(private readonly seed: bigint) {}

  u64(): bigint {
    this.counter += 1n;
    return mix((this.seed + this.counter * GAMMA) & MASK64);
  }

  random(): number {
    return Number(this.u64() >> 11n) * 2 ** -53;
  }
}

export function materializeTensor(shape: number[], dtype: string, seed: number): Tensor {
  if (!shape.every((d) => Number.isInteger(d) && d > 0)) {
    throw new TypeError(`tensor dims must be positive integers, got [${shape}]`);
  }
  const n = elementCount(shape);
  if (n > 1 << 18) throw new RangeError(`tensor of ${n} elements exceeds the executor budget`);
  const rng = new Rng(BigInt(seed));
  const data = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const u = 0.5 + rng.random();
    if (dtype === "float32") data[i] = Math.fround(u);
    else if (dtype === "int32") data[i] = Math.floor(1 + (u - 0.5) * 7);
    else if (dtype === "float64") data[i] = u;
    else throw new TypeError(`unsupported dtype '${dtype}'`);
  }
  return { shape: [...shape], dtype: dtype as Dtype, data };
}

export function decodeArg(value: WireValue): unknown {
  switch (value.t) {
    case "tensor":
      return materializeTensor(value.shape, value.dtype, value.seed);
    case "int":
    case "float":
    case "bool":
    case "str":
      return value.v;
    case "tuple":
    case "list":
      return value.items.map(decodeArg);
    case "raw":
      return value.repr;
  }
}

// ---------------------------------------------------------------------------
// Output digests (same schema the engine's oracles consume)
// ---------------------------------------------------------------------------

// Strict JSON cannot carry NaN/Infinity, so non-finite digest floats are
// shipped as these literal strings (the engine parses them back).
export type WireFloat = number | "NaN" | "Infinity" | "-Infinity";

export function encodeFloat(v: number): WireFloat {
  if (Number.isNaN(v)) return "NaN";
  if (v === Infinity) return "Infinity";
  if (v === -Infinity) return "-Infinity";
  return v;
}

export interface Digest {
  shape: number[];
  dtype: string;
  all_finite: boolean;
  sum: WireFloat;
  abs_sum: WireFloat;
  sample: WireFloat[];
}

export function digest(t: Tensor): Digest {
  const n = t.data.length;
  const k = Math.min(16, n);
  let sum = 0;
  let absSum = 0;
  let allFinite = true;
  for (const v of t.data) {
    sum += v;
    absSum += Math.abs(v);
    if (!Number.isFinite(v)) allFinite = false;
  }
  const sample: WireFloat[] = [];
  for (let i = 0; i < k; i++) sample.push(encodeFloat(t.data[Math.floor((i * n) / k)]));
  return {
    shape: [...t.shape],
    dtype: t.dtype,
    all_finite: allFinite,
    sum: encodeFloat(sum),
    abs_sum: encodeFloat(absSum),
    sample,
  };
}
