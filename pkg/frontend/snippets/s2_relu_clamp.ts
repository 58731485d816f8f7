// Activation-style calls, a bounds pair, and the two-phase pooler layer.
import { fill, fromValues, toylib } from "../src/toylib";

export function run(): void {
  toylib.relu(fill([2, 2], -0.5));
  toylib.clamp(fromValues([-2, -1, 0, 1, 2, 3]), [0, 1]);
  const pool = toylib.pooler(2) as (x: unknown) => unknown;
  pool(fromValues([1, 2, 3, 4, 5, 6]));
}
