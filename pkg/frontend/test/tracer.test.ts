import assert from "node:assert/strict";
import { test } from "node:test";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { fill, fromValues, toylib, Tensor } from "../src/toylib";
import { Tracer, loadHookSpec, paramNames, traceSnippets } from "../src/tracer";
import { encodeValue } from "../src/wire";

const HOOKS = path.join(__dirname, "..", "..", "hooks.txt");
const SNIPPETS_DIR = path.join(__dirname, "..", "snippets");

const ALL_SNIPPETS = [
  "s1_add_scale.js",
  "s2_relu_clamp.js",
  "s3_matmul_normalize.js",
  "s4_repeat_shapes.js",
  "s5_loop.js",
].map((name) => path.join(SNIPPETS_DIR, name));

function tmpFile(name: string): string {
  return path.join(fs.mkdtempSync(path.join(os.tmpdir(), "toytrace-")), name);
}

test("paramNames recovers declared parameter names", () => {
  assert.deepEqual(paramNames(toylib.add), ["a", "b"]);
  assert.deepEqual(paramNames(toylib.scale), ["x", "factor"]);
  assert.deepEqual(paramNames(toylib.normalize), ["x", "mode"]);
});

test("hook spec file parsing skips comments", () => {
  const spec = loadHookSpec(HOOKS);
  assert.deepEqual(spec.names, [
    "toylib.add",
    "toylib.scale",
    "toylib.relu",
    "toylib.clamp",
    "toylib.matmul",
    "toylib.normalize",
    "toylib.pooler",
  ]);
});

test("encodeValue covers the tagged wire forms", () => {
  assert.deepEqual(encodeValue(3), { t: "int", v: 3 });
  assert.deepEqual(encodeValue(2.5), { t: "float", v: 2.5 });
  assert.deepEqual(encodeValue(true), { t: "bool", v: true });
  assert.deepEqual(encodeValue("l2"), { t: "str", v: "l2" });
  assert.deepEqual(encodeValue([1, 2]), {
    t: "list",
    items: [
      { t: "int", v: 1 },
      { t: "int", v: 2 },
    ],
  });
  assert.deepEqual(encodeValue(fill([2, 3], 0), 7), {
    t: "tensor",
    shape: [2, 3],
    dtype: "float64",
    seed: 7,
  });
  assert.deepEqual(encodeValue(null), { t: "raw", repr: "null" });
});

test("hooks are transparent: traced results equal untraced results", () => {
  const x = fromValues([-1, 2, -3]);
  const plain = toylib.relu(x) as Tensor;
  const tracer = new Tracer("test");
  tracer.install(loadHookSpec(HOOKS));
  try {
    const traced = toylib.relu(x) as Tensor;
    assert.deepEqual(Array.from(traced.data), Array.from(plain.data));
    assert.deepEqual(traced.shape, plain.shape);
    // Exceptions pass through unchanged too.
    assert.throws(() => toylib.normalize(x, "bogus"), RangeError);
  } finally {
    tracer.uninstall();
  }
  assert.equal(tracer.records.length, 2); // relu plus the throwing normalize
  assert.equal(tracer.records[1].api, "toylib.normalize");
});

test("tracing records named args with tensor shape reduction", () => {
  const tracer = new Tracer("doc");
  tracer.install(loadHookSpec(HOOKS));
  try {
    toylib.scale(fromValues([1, 2, 3, 4]), 2.5);
  } finally {
    tracer.uninstall();
  }
  assert.equal(tracer.records.length, 1);
  const record = tracer.records[0];
  assert.equal(record.api, "toylib.scale");
  assert.equal(record.source, "doc");
  assert.deepEqual(record.args.map((a) => a.name), ["x", "factor"]);
  const tensorArg = record.args[0].value;
  assert.equal(tensorArg.t, "tensor");
  if (tensorArg.t === "tensor") {
    assert.deepEqual(tensorArg.shape, [4]);
    assert.equal(tensorArg.dtype, "float64");
  }
  assert.deepEqual(record.args[1].value, { t: "float", v: 2.5 });
});

test("snippet corpus produces the hand-counted record stream", () => {
  const out = tmpFile("trace.jsonl");
  const result = traceSnippets(ALL_SNIPPETS, loadHookSpec(HOOKS), out, "test");
  assert.deepEqual(result.failures, []);
  assert.equal(result.records, 12); // 2+3+2+2+3 invocations
  const lines = fs.readFileSync(out, "utf-8").trim().split("\n");
  assert.equal(lines.length, 12);
  const apis = lines.map((l) => JSON.parse(l).api);
  const counts = apis.reduce<Record<string, number>>((acc, a) => {
    acc[a] = (acc[a] ?? 0) + 1;
    return acc;
  }, {});
  assert.deepEqual(counts, {
    "toylib.add": 2,
    "toylib.scale": 4,
    "toylib.relu": 2,
    "toylib.clamp": 1,
    "toylib.matmul": 1,
    "toylib.normalize": 1,
    "toylib.pooler": 1,
  });
});

test("two-phase pooler traces as one logical invocation", () => {
  const tracer = new Tracer("model");
  tracer.install(loadHookSpec(HOOKS));
  try {
    const pool = toylib.pooler(3) as (x: unknown) => Tensor;
    assert.equal(tracer.records.length, 0); // nothing until the call phase
    const out = pool(fromValues([1, 2, 3, 4, 5, 6]));
    assert.deepEqual(Array.from(out.data), [2, 5]);
  } finally {
    tracer.uninstall();
  }
  assert.equal(tracer.records.length, 1);
  const record = tracer.records[0];
  assert.equal(record.api, "toylib.pooler");
  assert.deepEqual(record.args.map((a) => a.name), ["window", "x"]);
  assert.deepEqual(record.args[0].value, { t: "int", v: 3 });
  const tensorArg = record.args[1].value;
  assert.equal(tensorArg.t, "tensor");
  if (tensorArg.t === "tensor") assert.deepEqual(tensorArg.shape, [6]);
});

test("snippet touching no hooked api records nothing", () => {
  const out = tmpFile("empty.jsonl");
  const tracer = new Tracer();
  tracer.install(loadHookSpec(HOOKS));
  try {
    fill([4], 1.0); // constructors are not hooked
  } finally {
    tracer.uninstall();
  }
  assert.equal(tracer.flush(out), 0);
  assert.equal(fs.readFileSync(out, "utf-8"), "");
});

test("same snippet twice yields records that dedup downstream", () => {
  const spec = loadHookSpec(HOOKS);
  const s5 = [path.join(SNIPPETS_DIR, "s5_loop.js")];
  const outA = tmpFile("a.jsonl");
  const outB = tmpFile("b.jsonl");
  traceSnippets(s5, spec, outA);
  traceSnippets(s5, spec, outB);
  const strip = (file: string) =>
    fs
      .readFileSync(file, "utf-8")
      .trim()
      .split("\n")
      .map((l) => {
        const obj = JSON.parse(l);
        for (const arg of obj.args) if (arg.value.t === "tensor") delete arg.value.seed;
        return JSON.stringify(obj);
      });
  // Identical modulo tensor seeds, which the engine's fingerprint ignores.
  assert.deepEqual(strip(outA), strip(outB));
});
