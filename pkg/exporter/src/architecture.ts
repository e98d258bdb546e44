/**
 * Reference autoencoder architectures the converter understands.
 *
 * Checkpoints name their tensors "enc/<layer>/kernel|bias" and
 * "dec/<layer>/kernel|bias" with the layer names below. The two real
 * depths stop the encoder after the first conv of stage 3 or stage 4;
 * "mini" is a small fixture architecture used by tests and smoke runs.
 */

import { ManifestLayer } from "./container.js";

export interface ConvSpec {
  name: string; // checkpoint layer name, e.g. "conv1_1"
  cin: number;
  cout: number;
  scope: "enc" | "dec";
  relu: boolean;
}

export interface Architecture {
  depth: string;
  transformChannels: number;
  /** conv specs in forward order, with pool/unpool markers interleaved */
  sequence: Array<ConvSpec | "pool" | "unpool" | "transform">;
}

function enc(name: string, cin: number, cout: number): ConvSpec {
  return { name, cin, cout, scope: "enc", relu: true };
}

function dec(name: string, cin: number, cout: number, relu = true): ConvSpec {
  return { name, cin, cout, scope: "dec", relu };
}

const RELU3_1: Architecture = {
  depth: "relu3_1",
  transformChannels: 256,
  sequence: [
    enc("conv1_1", 3, 64),
    enc("conv1_2", 64, 64),
    "pool",
    enc("conv2_1", 64, 128),
    enc("conv2_2", 128, 128),
    "pool",
    enc("conv3_1", 128, 256),
    "transform",
    dec("dec3_1", 256, 128),
    "unpool",
    dec("dec2_2", 128, 128),
    dec("dec2_1", 128, 64),
    "unpool",
    dec("dec1_2", 64, 64),
    dec("dec1_1", 64, 3, false),
  ],
};

const RELU4_1: Architecture = {
  depth: "relu4_1",
  transformChannels: 512,
  sequence: [
    enc("conv1_1", 3, 64),
    enc("conv1_2", 64, 64),
    "pool",
    enc("conv2_1", 64, 128),
    enc("conv2_2", 128, 128),
    "pool",
    enc("conv3_1", 128, 256),
    enc("conv3_2", 256, 256),
    enc("conv3_3", 256, 256),
    enc("conv3_4", 256, 256),
    "pool",
    enc("conv4_1", 256, 512),
    "transform",
    dec("dec4_1", 512, 256),
    "unpool",
    dec("dec3_4", 256, 256),
    dec("dec3_3", 256, 256),
    dec("dec3_2", 256, 256),
    dec("dec3_1", 256, 128),
    "unpool",
    dec("dec2_2", 128, 128),
    dec("dec2_1", 128, 64),
    "unpool",
    dec("dec1_2", 64, 64),
    dec("dec1_1", 64, 3, false),
  ],
};

const MINI: Architecture = {
  depth: "mini",
  transformChannels: 8,
  sequence: [
    enc("conv1_1", 3, 6),
    "pool",
    enc("conv2_1", 6, 8),
    "transform",
    dec("dec2_1", 8, 6),
    "unpool",
    dec("dec1_1", 6, 3, false),
  ],
};

export const ARCHITECTURES: Record<string, Architecture> = {
  relu3_1: RELU3_1,
  relu4_1: RELU4_1,
  mini: MINI,
};

export function convSpecs(arch: Architecture): ConvSpec[] {
  return arch.sequence.filter((s): s is ConvSpec => typeof s !== "string");
}

/** Engine manifest for an architecture (convs, relus, pools, transform). */
export function buildManifest(arch: Architecture): ManifestLayer[] {
  const layers: ManifestLayer[] = [];
  let channels = 3;
  for (const step of arch.sequence) {
    if (step === "pool" || step === "unpool") {
      layers.push({
        name: `${step}${layers.length}`,
        kind: step,
        in_channels: channels,
        out_channels: channels,
      });
    } else if (step === "transform") {
      layers.push({
        name: "style_transform",
        kind: "transform",
        in_channels: channels,
        out_channels: channels,
      });
    } else {
      const name = `${step.scope}_${step.name}`;
      layers.push({
        name,
        kind: "conv",
        in_channels: step.cin,
        out_channels: step.cout,
      });
      if (step.relu) {
        layers.push({
          name: `${name}_relu`,
          kind: "relu",
          in_channels: step.cout,
          out_channels: step.cout,
        });
      }
      channels = step.cout;
    }
  }
  return layers;
}

/** Checkpoint tensors an architecture requires: name -> expected shape. */
export function expectedCheckpointTensors(
  arch: Architecture
): Map<string, number[]> {
  const expected = new Map<string, number[]>();
  for (const spec of convSpecs(arch)) {
    expected.set(`${spec.scope}/${spec.name}/kernel`, [3, 3, spec.cin, spec.cout]);
    expected.set(`${spec.scope}/${spec.name}/bias`, [spec.cout]);
  }
  return expected;
}
