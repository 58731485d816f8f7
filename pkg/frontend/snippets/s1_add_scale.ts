// Elementwise basics: one add, one scale.
import { fill, fromValues, toylib } from "../src/toylib";

export function run(): void {
  const a = fill([2, 3], 1.0);
  const b = fill([2, 3], 2.0);
  toylib.add(a, b);
  toylib.scale(fromValues([1, 2, 3, 4]), 2.5);
}
