/**
 * Weight container I/O.
 *
 * Byte layout (shared with the graph engine, little-endian throughout):
 *
 *   bytes 0..7     magic "SELCONVW"
 *   bytes 8..15    uint64 header length H
 *   bytes 16..16+H UTF-8 JSON {"layers": [...], "tensors": {...}}
 *   bytes 16+H..   float32 row-major tensor blob
 *
 * "tensors" maps tensor name to {offset: bytes into the blob, shape}.
 * A conv layer owns <name>.w0 .. <name>.w8 (each in_channels x out_channels)
 * plus <name>.bias; conv1x1 owns only .w0 and .bias.
 */

import * as fs from "node:fs";

export const MAGIC = "SELCONVW";
export const N_BINS = 9;

export type LayerKind =
  | "conv"
  | "conv1x1"
  | "relu"
  | "pool"
  | "unpool"
  | "transform";

export interface ManifestLayer {
  name: string;
  kind: LayerKind;
  in_channels: number;
  out_channels: number;
}

export interface Tensor {
  shape: number[];
  data: Float32Array;
}

export class ContainerError extends Error {}

const KINDS: LayerKind[] = ["conv", "conv1x1", "relu", "pool", "unpool", "transform"];

/** Mirror of the engine's manifest rules; rejects invalid layer chains. */
export function validateManifest(layers: ManifestLayer[]): void {
  let prevOut: number | null = null;
  let depth = 0;
  for (const layer of layers) {
    if (!KINDS.includes(layer.kind)) {
      throw new ContainerError(`unknown layer kind '${layer.kind}'`);
    }
    if (layer.kind !== "conv" && layer.kind !== "conv1x1") {
      if (layer.in_channels !== layer.out_channels) {
        throw new ContainerError(
          `${layer.kind} layer '${layer.name}' cannot change channels`
        );
      }
    }
    if (prevOut !== null && layer.in_channels !== prevOut) {
      throw new ContainerError(
        `channel chain broken at '${layer.name}': ${prevOut} -> ${layer.in_channels}`
      );
    }
    prevOut = layer.out_channels;
    if (layer.kind === "pool") depth += 1;
    if (layer.kind === "unpool") {
      depth -= 1;
      if (depth < 0) throw new ContainerError("unpool without a matching pool");
    }
  }
  if (depth !== 0) throw new ContainerError(`${depth} pool layer(s) left unmatched`);
}

/** Tensor names a manifest requires, in canonical blob order. */
export function tensorNames(layers: ManifestLayer[]): string[] {
  const names: string[] = [];
  for (const layer of layers) {
    if (layer.kind === "conv") {
      for (let m = 0; m < N_BINS; m++) names.push(`${layer.name}.w${m}`);
      names.push(`${layer.name}.bias`);
    } else if (layer.kind === "conv1x1") {
      names.push(`${layer.name}.w0`, `${layer.name}.bias`);
    }
  }
  return names;
}

function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function writeContainer(
  path: string,
  layers: ManifestLayer[],
  tensors: Map<string, Tensor>
): void {
  validateManifest(layers);
  const order = tensorNames(layers);
  const meta: Record<string, { offset: number; shape: number[] }> = {};
  let blobBytes = 0;
  for (const name of order) {
    const tensor = tensors.get(name);
    if (!tensor) throw new ContainerError(`missing tensor '${name}'`);
    if (tensor.data.length !== numel(tensor.shape)) {
      throw new ContainerError(`tensor '${name}' data does not match its shape`);
    }
    meta[name] = { offset: blobBytes, shape: tensor.shape };
    blobBytes += tensor.data.length * 4;
  }

  const header = Buffer.from(
    JSON.stringify({ layers, tensors: meta }),
    "utf-8"
  );
  const out = Buffer.alloc(16 + header.length + blobBytes);
  out.write(MAGIC, 0, "ascii");
  out.writeBigUInt64LE(BigInt(header.length), 8);
  header.copy(out, 16);
  let cursor = 16 + header.length;
  for (const name of order) {
    const tensor = tensors.get(name)!;
    // explicit little-endian float32 writes keep the blob portable
    for (let i = 0; i < tensor.data.length; i++) {
      out.writeFloatLE(tensor.data[i], cursor + 4 * i);
    }
    cursor += tensor.data.length * 4;
  }
  fs.writeFileSync(path, out);
}

export function readContainer(path: string): {
  layers: ManifestLayer[];
  tensors: Map<string, Tensor>;
} {
  const raw = fs.readFileSync(path);
  if (raw.subarray(0, 8).toString("ascii") !== MAGIC) {
    throw new ContainerError("bad magic; not a weight container");
  }
  const headerLen = Number(raw.readBigUInt64LE(8));
  const header = JSON.parse(raw.subarray(16, 16 + headerLen).toString("utf-8"));
  const blob = raw.subarray(16 + headerLen);
  const tensors = new Map<string, Tensor>();
  for (const [name, meta] of Object.entries<{ offset: number; shape: number[] }>(
    header.tensors
  )) {
    const count = numel(meta.shape);
    const end = meta.offset + 4 * count;
    if (end > blob.length) {
      throw new ContainerError(`tensor '${name}' extends past end of blob`);
    }
    const data = new Float32Array(count);
    for (let i = 0; i < count; i++) {
      data[i] = blob.readFloatLE(meta.offset + 4 * i);
    }
    tensors.set(name, { shape: meta.shape, data });
  }
  validateManifest(header.layers);
  return { layers: header.layers, tensors };
}
