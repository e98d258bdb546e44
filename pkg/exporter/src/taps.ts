/**
 * 3x3 kernel splitting.
 *
 * The engine's direction bins map to kernel taps at pixel offsets
 * (row, col): bin 0 is the center, bins 1..8 are (-1,0), (-1,1), (0,1),
 * (1,1), (1,0), (1,-1), (0,-1), (-1,-1). Checkpoint kernels arrive in
 * HWIO layout [3, 3, in, out]; tap (r, c) is then the contiguous
 * in*out-element slice starting at (r*3 + c)*in*out, already in the
 * engine's (in, out) row-major order.
 */

import { ContainerError, Tensor } from "./container.js";

export const BIN_TAP_OFFSETS: ReadonlyArray<readonly [number, number]> = [
  [0, 0], // bin 0: center
  [-1, 0],
  [-1, 1],
  [0, 1],
  [1, 1],
  [1, 0],
  [1, -1],
  [0, -1],
  [-1, -1],
];

export interface ConvKernel {
  shape: number[]; // [3, 3, in, out]
  data: Float32Array;
}

export function splitKernelTaps(kernel: ConvKernel): Tensor[] {
  const [kh, kw, cin, cout] = kernel.shape;
  if (kernel.shape.length !== 4 || kh !== 3 || kw !== 3) {
    throw new ContainerError(
      `expected a [3,3,in,out] kernel, got [${kernel.shape.join(",")}]`
    );
  }
  const block = cin * cout;
  return BIN_TAP_OFFSETS.map(([dr, dc]) => {
    const r = 1 + dr;
    const c = 1 + dc;
    const start = (r * 3 + c) * block;
    return {
      shape: [cin, cout],
      data: kernel.data.slice(start, start + block),
    };
  });
}
