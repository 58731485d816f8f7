// A deliberately small dynamically-invoked tensor library: the tracing
// target. Tensors are plain objects so hooks see exactly what users pass.

export type Dtype = "float64" | "float32" | "int32";

export interface Tensor {
  shape: number[];
  dtype: Dtype;
  data: Float64Array;
}

export class ShapeError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ShapeError";
  }
}

export function elementCount(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function fill(shape: number[], value: number, dtype: Dtype = "float64"): Tensor {
  const data = new Float64Array(elementCount(shape)).fill(value);
  return { shape: [...shape], dtype, data };
}

export function fromValues(values: number[], dtype: Dtype = "float64"): Tensor {
  return { shape: [values.length], dtype, data: Float64Array.from(values) };
}

function sameShape(a: Tensor, b: Tensor): boolean {
  return a.shape.length === b.shape.length && a.shape.every((d, i) => d === b.shape[i]);
}

function mapData(x: Tensor, fn: (v: number) => number): Tensor {
  const data = new Float64Array(x.data.length);
  for (let i = 0; i < data.length; i++) data[i] = fn(x.data[i]);
  return { shape: [...x.shape], dtype: x.dtype, data };
}

// ---------------------------------------------------------------------------
// Public API surface (the hookable functions)
// ---------------------------------------------------------------------------

function add(a: Tensor, b: Tensor): Tensor {
  if (!sameShape(a, b)) {
    throw new ShapeError(`shape mismatch: [${a.shape}] vs [${b.shape}]`);
  }
  const data = new Float64Array(a.data.length);
  for (let i = 0; i < data.length; i++) data[i] = a.data[i] + b.data[i];
  return { shape: [...a.shape], dtype: a.dtype, data };
}

function scale(x: Tensor, factor: number): Tensor {
  if (typeof factor !== "number") {
    throw new TypeError(`factor must be a number, got ${typeof factor}`);
  }
  return mapData(x, (v) => v * factor);
}

function relu(x: Tensor): Tensor {
  return mapData(x, (v) => (v > 0 ? v : 0));
}

function clamp(x: Tensor, bounds: [number, number]): Tensor {
  if (!Array.isArray(bounds) || bounds.length !== 2) {
    throw new TypeError("bounds must be a [lo, hi] pair");
  }
  const [lo, hi] = bounds;
  if (lo > hi) throw new RangeError(`empty clamp range [${lo}, ${hi}]`);
  return mapData(x, (v) => Math.min(Math.max(v, lo), hi));
}

function matmul(a: Tensor, b: Tensor): Tensor {
  if (a.shape.length !== 2 || b.shape.length !== 2) {
    throw new ShapeError("matmul needs two rank-2 tensors");
  }
  const [m, k] = a.shape;
  const [k2, n] = b.shape;
  if (k !== k2) throw new ShapeError(`inner dimensions disagree: [${a.shape}] @ [${b.shape}]`);
  const data = new Float64Array(m * n);
  for (let i = 0; i < m; i++) {
    for (let j = 0; j < n; j++) {
      let acc = 0;
      for (let p = 0; p < k; p++) acc += a.data[i * k + p] * b.data[p * n + j];
      data[i * n + j] = acc;
    }
  }
  return { shape: [m, n], dtype: a.dtype, data };
}

function normalize(x: Tensor, mode: string): Tensor {
  if (mode !== "l1" && mode !== "l2") {
    throw new RangeError(`mode must be 'l1' or 'l2', got '${mode}'`);
  }
  let denom = 0;
  for (const v of x.data) denom += mode === "l1" ? Math.abs(v) : v * v;
  if (mode === "l2") denom = Math.sqrt(denom);
  if (denom === 0) denom = 1;
  return mapData(x, (v) => v / denom);
}

// Two-phase construct-then-call API, the layer-object pattern: the
// constructor takes configuration, the returned callable takes tensors.
function pooler(window: number): (x: Tensor) => Tensor {
  if (!Number.isInteger(window) || window < 1) {
    throw new RangeError(`window must be a positive integer, got ${window}`);
  }
  return (x: Tensor): Tensor => {
    if (x.shape.length !== 1) throw new ShapeError("pooler needs a rank-1 tensor");
    const n = x.shape[0];
    if (n < window) throw new ShapeError(`input of length ${n} shorter than window ${window}`);
    const count = Math.floor(n / window);
    const data = new Float64Array(count);
    for (let i = 0; i < count; i++) {
      let acc = 0;
      for (let j = 0; j < window; j++) acc += x.data[i * window + j];
      data[i] = acc / window;
    }
    return { shape: [count], dtype: x.dtype, data };
  };
}

// The mutable registry hooks wrap in place; keys match the fully qualified
// names (toylib.<key>) used by hook-spec files.
export const toylib: Record<string, Function> = {
  add,
  scale,
  relu,
  clamp,
  matmul,
  normalize,
  pooler,
};

export const LIB_PREFIX = "toylib";
