// Executor protocol endpoint: line-delimited JSON requests on stdin, one
// response per line on stdout. Every request is self-contained; exception
// class names are reported verbatim from the thrown error.

import * as readline from "node:readline";
import { LIB_PREFIX, Tensor, toylib } from "./toylib";
import { Digest, WireValue, decodeArg, digest } from "./wire";
import { paramNames } from "./tracer";

export const BACKENDS = ["main", "lowp"] as const;
export type Backend = (typeof BACKENDS)[number];

interface Request {
  id: number;
  api: string;
  backend: string;
  args: { name: string; value: WireValue }[];
  timing_reps: number;
}

interface OkResponse {
  id: number;
  status: "ok";
  output: Digest;
  elapsed_ms: number[];
}

interface ExceptionResponse {
  id: number;
  status: "exception";
  exception: { class: string; message: string };
}

export type Response = OkResponse | ExceptionResponse;

function isTensor(v: unknown): v is Tensor {
  return typeof v === "object" && v !== null && (v as Tensor).data instanceof Float64Array;
}

// The low-precision backend rounds every element through float32 after the
// call, standing in for a reduced-precision kernel path.
function applyBackend(out: Tensor, backend: Backend): Tensor {
  if (backend === "main") return out;
  const data = new Float64Array(out.data.length);
  for (let i = 0; i < data.length; i++) data[i] = Math.fround(out.data[i]);
  return { shape: out.shape, dtype: out.dtype, data };
}

function invoke(api: string, args: Request["args"], backend: Backend): Tensor {
  const [prefix, key] = api.split(".", 2);
  const fn = prefix === LIB_PREFIX ? toylib[key] : undefined;
  if (typeof fn !== "function") {
    throw new TypeError(`unknown API '${api}'`);
  }
  const byName = new Map(args.map((a) => [a.name, a.value] as const));
  const take = (names: string[]) =>
    names.map((name) => {
      const wire = byName.get(name);
      if (wire === undefined) throw new TypeError(`missing argument '${name}'`);
      byName.delete(name);
      return decodeArg(wire);
    });

  let out: unknown = fn(...take(paramNames(fn)));
  if (typeof out === "function") {
    // Two-phase API: leftover args feed the returned callable.
    out = (out as Function)(...take(paramNames(out as Function)));
  }
  if (byName.size > 0) {
    throw new TypeError(`unexpected argument '${[...byName.keys()][0]}'`);
  }
  if (!isTensor(out)) throw new TypeError(`API '${api}' did not return a tensor`);
  return applyBackend(out, backend);
}

export function handleRequest(obj: Request, backend: Backend): Response {
  const id = typeof obj?.id === "number" ? obj.id : -1;
  try {
    if (obj.backend !== backend) {
      throw new RangeError(`executor serves backend '${backend}', got '${obj.backend}'`);
    }
    const reps = Math.max(1, obj.timing_reps | 0);
    const elapsed: number[] = [];
    let out: Tensor | undefined;
    for (let rep = 0; rep < reps; rep++) {
      const t0 = process.hrtime.bigint();
      out = invoke(obj.api, obj.args ?? [], backend);
      elapsed.push(Number(process.hrtime.bigint() - t0) / 1e6);
    }
    return { id, status: "ok", output: digest(out as Tensor), elapsed_ms: elapsed };
  } catch (err) {
    const e = err as Error;
    return {
      id,
      status: "exception",
      exception: { class: e?.name ?? "Error", message: e?.message ?? String(err) },
    };
  }
}

export function serve(backend: string): void {
  if (!(BACKENDS as readonly string[]).includes(backend)) {
    // Handshake failure: one protocol-level exception response, then exit.
    process.stdout.write(
      JSON.stringify({
        id: -1,
        status: "exception",
        exception: { class: "RangeError", message: `unsupported backend '${backend}'` },
      }) + "\n",
    );
    process.exit(2);
  }
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    const text = line.trim();
    if (!text) return;
    let obj: Request;
    try {
      obj = JSON.parse(text);
    } catch {
      obj = { id: -1, api: "?", backend, args: [], timing_reps: 1 };
    }
    process.stdout.write(JSON.stringify(handleRequest(obj, backend as Backend)) + "\n");
  });
}
