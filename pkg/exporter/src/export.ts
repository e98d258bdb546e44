/**
 * Checkpoint to weight-container conversion.
 *
 * Every 3x3 kernel in the reference architecture is split into its nine
 * spatial taps (center tap first) and written under the engine's tensor
 * names; biases are copied through. The output manifest lists the
 * encoder, transform and decoder layers in forward order.
 */

import {
  ManifestLayer,
  Tensor,
  validateManifest,
  writeContainer,
} from "./container.js";
import {
  ARCHITECTURES,
  Architecture,
  buildManifest,
  convSpecs,
  expectedCheckpointTensors,
} from "./architecture.js";
import { ExportError, readCheckpoint } from "./checkpoint.js";
import { splitKernelTaps } from "./taps.js";

export interface ExportSpec {
  checkpointDir: string;
  depth: string;
  outPath: string;
}

function shapesEqual(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

export function resolveArchitecture(depth: string): Architecture {
  const arch = ARCHITECTURES[depth];
  if (!arch) {
    throw new ExportError(
      `unknown encoder depth '${depth}' (choose from ${Object.keys(ARCHITECTURES).join(", ")})`
    );
  }
  return arch;
}

export function exportCheckpoint(spec: ExportSpec): ManifestLayer[] {
  const arch = resolveArchitecture(spec.depth);
  const checkpoint = readCheckpoint(spec.checkpointDir);
  const expected = expectedCheckpointTensors(arch);

  for (const name of checkpoint.keys()) {
    if (!expected.has(name)) {
      throw new ExportError(`unknown layer tensor '${name}' in checkpoint`);
    }
  }

  const tensors = new Map<string, Tensor>();
  for (const conv of convSpecs(arch)) {
    const layerName = `${conv.scope}_${conv.name}`;
    const kernelName = `${conv.scope}/${conv.name}/kernel`;
    const biasName = `${conv.scope}/${conv.name}/bias`;
    const kernel = checkpoint.get(kernelName);
    const bias = checkpoint.get(biasName);
    if (!kernel) throw new ExportError(`checkpoint is missing '${kernelName}'`);
    if (!bias) throw new ExportError(`checkpoint is missing '${biasName}'`);
    const wantKernel = expected.get(kernelName)!;
    if (!shapesEqual(kernel.shape, wantKernel)) {
      throw new ExportError(
        `'${kernelName}' has shape [${kernel.shape}], expected [${wantKernel}]`
      );
    }
    if (!shapesEqual(bias.shape, expected.get(biasName)!)) {
      throw new ExportError(
        `'${biasName}' has shape [${bias.shape}], expected [${expected.get(biasName)}]`
      );
    }
    splitKernelTaps(kernel).forEach((tap, m) => {
      tensors.set(`${layerName}.w${m}`, tap);
    });
    tensors.set(`${layerName}.bias`, bias);
  }

  const layers = buildManifest(arch);
  validateManifest(layers);
  writeContainer(spec.outPath, layers, tensors);
  return layers;
}

/** Minimal pass-through bundle: one conv1x1 with an identity matrix. */
export function makeIdentityBundle(channels: number, outPath: string): void {
  if (channels < 1) throw new ExportError("channels must be >= 1");
  const eye = new Float32Array(channels * channels);
  for (let i = 0; i < channels; i++) eye[i * channels + i] = 1.0;
  const layers: ManifestLayer[] = [
    {
      name: "identity",
      kind: "conv1x1",
      in_channels: channels,
      out_channels: channels,
    },
  ];
  const tensors = new Map<string, Tensor>([
    ["identity.w0", { shape: [channels, channels], data: eye }],
    ["identity.bias", { shape: [channels], data: new Float32Array(channels) }],
  ]);
  writeContainer(outPath, layers, tensors);
}
