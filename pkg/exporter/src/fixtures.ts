/**
 * Fixture checkpoint generation.
 *
 * Writes a seeded random checkpoint in the native model.json + shard
 * layout for any known architecture, so conversion can be exercised and
 * demonstrated without redistributing pretrained weights.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { Architecture, convSpecs } from "./architecture.js";

/** Deterministic 32-bit PRNG (mulberry32). */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Standard normal draws via Box-Muller over the uniform stream. */
export function gaussian(rand: () => number): () => number {
  let spare: number | null = null;
  return () => {
    if (spare !== null) {
      const v = spare;
      spare = null;
      return v;
    }
    let u = 0;
    let v = 0;
    while (u === 0) u = rand();
    v = rand();
    const radius = Math.sqrt(-2.0 * Math.log(u));
    spare = radius * Math.sin(2.0 * Math.PI * v);
    return radius * Math.cos(2.0 * Math.PI * v);
  };
}

export function writeFixtureCheckpoint(
  arch: Architecture,
  seed: number,
  dir: string
): void {
  fs.mkdirSync(dir, { recursive: true });
  const randn = gaussian(mulberry32(seed));

  const weights: Array<{ name: string; shape: number[]; dtype: string }> = [];
  const chunks: Buffer[] = [];
  for (const conv of convSpecs(arch)) {
    const kernelShape = [3, 3, conv.cin, conv.cout];
    const count = 9 * conv.cin * conv.cout;
    const scale = 1.0 / Math.sqrt(9.0 * conv.cin);
    const kernel = Buffer.alloc(4 * count);
    for (let i = 0; i < count; i++) kernel.writeFloatLE(randn() * scale, 4 * i);
    weights.push({
      name: `${conv.scope}/${conv.name}/kernel`,
      shape: kernelShape,
      dtype: "float32",
    });
    chunks.push(kernel);

    const bias = Buffer.alloc(4 * conv.cout);
    for (let i = 0; i < conv.cout; i++) bias.writeFloatLE(randn() * 0.01, 4 * i);
    weights.push({
      name: `${conv.scope}/${conv.name}/bias`,
      shape: [conv.cout],
      dtype: "float32",
    });
    chunks.push(bias);
  }

  fs.writeFileSync(path.join(dir, "weights.bin"), Buffer.concat(chunks));
  fs.writeFileSync(
    path.join(dir, "model.json"),
    JSON.stringify(
      {
        format: "layers-model",
        weightsManifest: [{ paths: ["weights.bin"], weights }],
      },
      null,
      2
    )
  );
}
