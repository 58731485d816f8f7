// The same invocation three times: three records, one surviving entry.
import { fromValues, toylib } from "../src/toylib";

export function run(): void {
  for (let i = 0; i < 3; i++) {
    toylib.scale(fromValues([1, 1, 1]), 1.5);
  }
}
