/**
 * Checkpoint reader for the TensorFlow.js weights layout: a model.json
 * whose weightsManifest groups list named float32 tensors stored
 * back-to-back in binary shard files.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { Tensor } from "./container.js";

export class ExportError extends Error {}

interface WeightSpec {
  name: string;
  shape: number[];
  dtype: string;
}

interface ManifestGroup {
  paths: string[];
  weights: WeightSpec[];
}

function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function readCheckpoint(dir: string): Map<string, Tensor> {
  const modelPath = path.join(dir, "model.json");
  if (!fs.existsSync(modelPath)) {
    throw new ExportError(`no model.json under '${dir}'`);
  }
  const model = JSON.parse(fs.readFileSync(modelPath, "utf-8"));
  const groups: ManifestGroup[] = model.weightsManifest;
  if (!Array.isArray(groups)) {
    throw new ExportError("model.json has no weightsManifest");
  }

  const tensors = new Map<string, Tensor>();
  for (const group of groups) {
    const shards = group.paths.map((p) => fs.readFileSync(path.join(dir, p)));
    const buffer = Buffer.concat(shards);
    let offset = 0;
    for (const spec of group.weights) {
      if (spec.dtype !== "float32") {
        throw new ExportError(
          `tensor '${spec.name}' has dtype ${spec.dtype}; only float32 is supported`
        );
      }
      const count = numel(spec.shape);
      if (offset + 4 * count > buffer.length) {
        throw new ExportError(`tensor '${spec.name}' extends past its shard data`);
      }
      const data = new Float32Array(count);
      for (let i = 0; i < count; i++) {
        data[i] = buffer.readFloatLE(offset + 4 * i);
      }
      tensors.set(spec.name, { shape: spec.shape, data });
      offset += 4 * count;
    }
  }
  return tensors;
}
