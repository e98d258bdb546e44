import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import {
  ContainerError,
  ManifestLayer,
  readContainer,
  tensorNames,
  validateManifest,
  writeContainer,
} from "../src/container.js";
import { makeIdentityBundle } from "../src/export.js";

let dir: string;
beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "scw-"));
});
afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

function convLayer(name: string, cin: number, cout: number): ManifestLayer {
  return { name, kind: "conv", in_channels: cin, out_channels: cout };
}

function randomTensors(layers: ManifestLayer[]): Map<string, { shape: number[]; data: Float32Array }> {
  const tensors = new Map();
  for (const layer of layers) {
    if (layer.kind !== "conv" && layer.kind !== "conv1x1") continue;
    const taps = layer.kind === "conv" ? 9 : 1;
    for (let m = 0; m < taps; m++) {
      const data = new Float32Array(layer.in_channels * layer.out_channels);
      for (let i = 0; i < data.length; i++) data[i] = Math.sin(i + m);
      tensors.set(`${layer.name}.w${m}`, {
        shape: [layer.in_channels, layer.out_channels],
        data,
      });
    }
    tensors.set(`${layer.name}.bias`, {
      shape: [layer.out_channels],
      data: new Float32Array(layer.out_channels).fill(0.25),
    });
  }
  return tensors;
}

describe("container round trip", () => {
  it("preserves layers, shapes and float32 payloads exactly", () => {
    const layers = [convLayer("c1", 3, 5)];
    const tensors = randomTensors(layers);
    const file = path.join(dir, "w.scw");
    writeContainer(file, layers, tensors);

    const back = readContainer(file);
    expect(back.layers).toEqual(layers);
    expect([...back.tensors.keys()].sort()).toEqual([...tensors.keys()].sort());
    for (const [name, tensor] of tensors) {
      const got = back.tensors.get(name)!;
      expect(got.shape).toEqual(tensor.shape);
      expect([...got.data]).toEqual([...tensor.data]);
    }
  });

  it("orders the blob by the manifest's tensor names", () => {
    const layers = [convLayer("c1", 2, 2)];
    expect(tensorNames(layers)).toEqual([
      "c1.w0", "c1.w1", "c1.w2", "c1.w3", "c1.w4",
      "c1.w5", "c1.w6", "c1.w7", "c1.w8", "c1.bias",
    ]);
  });

  it("rejects missing tensors", () => {
    const layers = [convLayer("c1", 2, 2)];
    expect(() => writeContainer(path.join(dir, "x.scw"), layers, new Map())).toThrow(
      ContainerError
    );
  });
});

describe("manifest validation", () => {
  it("rejects a broken channel chain", () => {
    expect(() =>
      validateManifest([convLayer("a", 3, 8), convLayer("b", 4, 3)])
    ).toThrow(/channel chain/);
  });

  it("rejects unpool without pool", () => {
    expect(() =>
      validateManifest([
        { name: "u", kind: "unpool", in_channels: 3, out_channels: 3 },
      ])
    ).toThrow(/unpool/);
  });

  it("rejects channel-changing relu", () => {
    expect(() =>
      validateManifest([
        { name: "r", kind: "relu", in_channels: 3, out_channels: 4 },
      ])
    ).toThrow(/cannot change channels/);
  });
});

describe("identity bundle", () => {
  it("holds an identity matrix and zero bias", () => {
    const file = path.join(dir, "id.scw");
    makeIdentityBundle(3, file);
    const back = readContainer(file);
    expect(back.layers).toEqual([
      { name: "identity", kind: "conv1x1", in_channels: 3, out_channels: 3 },
    ]);
    expect([...back.tensors.get("identity.w0")!.data]).toEqual([
      1, 0, 0, 0, 1, 0, 0, 0, 1,
    ]);
    expect([...back.tensors.get("identity.bias")!.data]).toEqual([0, 0, 0]);
  });

  it("is byte-identical across invocations", () => {
    const a = path.join(dir, "a.scw");
    const b = path.join(dir, "b.scw");
    makeIdentityBundle(4, a);
    makeIdentityBundle(4, b);
    expect(fs.readFileSync(a).equals(fs.readFileSync(b))).toBe(true);
  });
});
