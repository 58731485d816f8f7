// In-place API hooks: every listed function on the library registry is
// replaced by a wrapper that records one trace record per invocation and
// calls straight through, so program behavior never changes.

import * as fs from "node:fs";
import { LIB_PREFIX, toylib } from "./toylib";
import { TraceRecord, encodeValue } from "./wire";

export interface HookSpec {
  names: string[];
}

export function loadHookSpec(path: string): HookSpec {
  const names = fs
    .readFileSync(path, "utf-8")
    .split("\n")
    .map((line) => line.split("#", 1)[0].trim())
    .filter((line) => line.length > 0);
  return { names };
}

// Parameter names recovered from the function source; arguments are
// recorded under their real names so the engine can aggregate them
// across APIs. Falls back to positional labels for exotic sources.
export function paramNames(fn: Function): string[] {
  const source = fn.toString();
  const match = source.match(/\(([^)]*)\)/);
  if (!match) return [];
  return match[1]
    .split(",")
    .map((p) => p.split("=")[0].trim())
    .filter((p) => p.length > 0)
    .map((p, i) => (/^[A-Za-z_$][\w$]*$/.test(p) ? p : `arg${i}`));
}

export class Tracer {
  readonly records: TraceRecord[] = [];
  private originals = new Map<string, Function>();
  private seedCounter = 0;

  constructor(
    private readonly source: "doc" | "test" | "model" = "test",
  ) {}

  install(spec: HookSpec): number {
    let hooked = 0;
    for (const fqn of spec.names) {
      const [prefix, key] = fqn.split(".", 2);
      if (prefix !== LIB_PREFIX || typeof toylib[key] !== "function") continue;
      if (this.originals.has(fqn)) continue;
      const original = toylib[key];
      this.originals.set(fqn, original);
      const names = paramNames(original);
      const tracer = this;
      toylib[key] = function (...args: unknown[]) {
        let result: unknown;
        try {
          result = original.apply(this, args);
        } catch (err) {
          tracer.record(fqn, names, args); // raising invocations are traced too
          throw err;
        }
        if (typeof result !== "function") {
          tracer.record(fqn, names, args);
          return result;
        }
        // Two-phase API: defer until the returned callable runs, then log
        // one logical invocation with constructor and call args combined.
        const callNames = paramNames(result as Function);
        const inner = result as Function;
        return function (this: unknown, ...callArgs: unknown[]) {
          tracer.record(fqn, [...names, ...callNames], [...args, ...callArgs]);
          return inner.apply(this, callArgs);
        };
      };
      hooked += 1;
    }
    return hooked;
  }

  uninstall(): void {
    for (const [fqn, original] of this.originals) {
      const key = fqn.split(".", 2)[1];
      toylib[key] = original;
    }
    this.originals.clear();
  }

  private record(api: string, names: string[], args: unknown[]): void {
    this.seedCounter += 1;
    this.records.push({
      api,
      source: this.source,
      args: args.map((value, i) => ({
        name: names[i] ?? `arg${i}`,
        value: encodeValue(value, this.seedCounter),
      })),
    });
  }

  flush(outPath: string): number {
    const lines = this.records.map((r) => JSON.stringify(r));
    fs.writeFileSync(outPath, lines.length ? lines.join("\n") + "\n" : "");
    return this.records.length;
  }
}

// Runs each snippet module (anything exporting `run()`) under the hooks;
// a snippet that throws still leaves its earlier records in the trace.
export function traceSnippets(
  snippetPaths: string[],
  spec: HookSpec,
  outPath: string,
  source: "doc" | "test" | "model" = "test",
): { records: number; failures: string[] } {
  const tracer = new Tracer(source);
  tracer.install(spec);
  const failures: string[] = [];
  try {
    for (const path of snippetPaths) {
      // eslint-disable-next-line @typescript-eslint/no-var-requires
      const mod = require(require.resolve(path, { paths: [process.cwd()] }));
      try {
        if (typeof mod.run === "function") mod.run();
      } catch (err) {
        failures.push(`${path}: ${String(err)}`);
      }
    }
  } finally {
    tracer.uninstall();
  }
  const records = tracer.flush(outPath);
  return { records, failures };
}
