#!/usr/bin/env node
/**
 * splatstyle-export: convert pretrained style-transfer checkpoints into
 * the weight container the graph engine consumes.
 *
 * Commands:
 *   export                    --checkpoint <dir> --depth relu3_1|relu4_1|mini --out <file>
 *   make-identity-bundle      --channels <n> --out <file>
 *   make-fixture-checkpoint   --arch relu3_1|relu4_1|mini --seed <n> --out <dir>
 */

import { resolveArchitecture, exportCheckpoint, makeIdentityBundle } from "./export.js";
import { writeFixtureCheckpoint } from "./fixtures.js";

function parseArgs(argv: string[]): { command: string; options: Map<string, string> } {
  const [command, ...rest] = argv;
  const options = new Map<string, string>();
  for (let i = 0; i < rest.length; i += 2) {
    const flag = rest[i];
    const value = rest[i + 1];
    if (!flag.startsWith("--") || value === undefined) {
      throw new Error(`malformed option '${flag}'`);
    }
    options.set(flag.slice(2), value);
  }
  return { command, options };
}

function required(options: Map<string, string>, name: string): string {
  const value = options.get(name);
  if (value === undefined) throw new Error(`missing required option --${name}`);
  return value;
}

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs(argv);
  } catch (err) {
    console.error(String(err));
    return 2;
  }
  const { command, options } = parsed;
  try {
    if (command === "export") {
      const layers = exportCheckpoint({
        checkpointDir: required(options, "checkpoint"),
        depth: options.get("depth") ?? "relu3_1",
        outPath: required(options, "out"),
      });
      console.log(
        `wrote ${options.get("out")} (${layers.length} layers, depth ${options.get("depth") ?? "relu3_1"})`
      );
    } else if (command === "make-identity-bundle") {
      const channels = Number(options.get("channels") ?? "3");
      makeIdentityBundle(channels, required(options, "out"));
      console.log(`wrote ${options.get("out")} (identity, ${channels} channels)`);
    } else if (command === "make-fixture-checkpoint") {
      const arch = resolveArchitecture(options.get("arch") ?? "mini");
      const seed = Number(options.get("seed") ?? "0");
      writeFixtureCheckpoint(arch, seed, required(options, "out"));
      console.log(`wrote fixture checkpoint ${options.get("out")} (${arch.depth})`);
    } else {
      console.error(
        "usage: splatstyle-export <export|make-identity-bundle|make-fixture-checkpoint> [options]"
      );
      return 2;
    }
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
  return 0;
}

import { fileURLToPath } from "node:url";

if (process.argv[1] && fileURLToPath(import.meta.url) === process.argv[1]) {
  process.exit(main(process.argv.slice(2)));
}
