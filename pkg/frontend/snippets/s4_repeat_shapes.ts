// Repeats s1's add signature (same shapes and dtypes, different data), so
// its record deduplicates downstream; the relu shape is new.
import { fill, toylib } from "../src/toylib";

export function run(): void {
  toylib.add(fill([2, 3], 7.0), fill([2, 3], 9.0));
  toylib.relu(fill([5], -1.0));
}
