// A matmul and a string-mode normalize.
import { fill, fromValues, toylib } from "../src/toylib";

export function run(): void {
  toylib.matmul(fill([2, 3], 1.0), fill([3, 2], 0.5));
  toylib.normalize(fromValues([3, 4, 0, 0, 12]), "l2");
}
