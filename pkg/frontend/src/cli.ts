// CLI: `trace` runs snippet modules under API hooks and writes trace
// records; `serve` speaks the executor protocol for one backend.

import { loadHookSpec, traceSnippets } from "./tracer";
import { serve } from "./executor";

function usage(): never {
  console.error(
    [
      "usage:",
      "  cli.js trace --hooks <file> --out <trace.jsonl> [--source doc|test|model] <snippet.js>...",
      "  cli.js serve --backend <name>",
    ].join("\n"),
  );
  process.exit(2);
}

function parseFlags(argv: string[]): { flags: Map<string, string>; rest: string[] } {
  const flags = new Map<string, string>();
  const rest: string[] = [];
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg.startsWith("--")) {
      const value = argv[i + 1];
      if (value === undefined) usage();
      flags.set(arg.slice(2), value);
      i++;
    } else {
      rest.push(arg);
    }
  }
  return { flags, rest };
}

function main(argv: string[]): void {
  const [command, ...tail] = argv;
  if (command === "serve") {
    const { flags } = parseFlags(tail);
    const backend = flags.get("backend");
    if (!backend) usage();
    serve(backend);
    return;
  }
  if (command === "trace") {
    const { flags, rest } = parseFlags(tail);
    const hooks = flags.get("hooks");
    const out = flags.get("out");
    const source = (flags.get("source") ?? "test") as "doc" | "test" | "model";
    if (!hooks || !out || rest.length === 0) usage();
    if (!["doc", "test", "model"].includes(source)) usage();
    const result = traceSnippets(rest, loadHookSpec(hooks), out, source);
    for (const failure of result.failures) console.error(`snippet failed: ${failure}`);
    console.log(`records=${result.records} snippets=${rest.length} out=${out}`);
    process.exit(result.records > 0 || rest.length === 0 ? 0 : 1);
  }
  usage();
}

main(process.argv.slice(2));
