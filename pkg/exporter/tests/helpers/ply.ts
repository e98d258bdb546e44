/** Just enough binary splat-PLY I/O to drive the stylizer externally. */

export const PROPERTIES = [
  "x", "y", "z",
  "f_dc_0", "f_dc_1", "f_dc_2",
  "opacity",
  "scale_0", "scale_1", "scale_2",
  "rot_0", "rot_1", "rot_2", "rot_3",
] as const;

export type SplatRow = Record<(typeof PROPERTIES)[number], number>;

export function writeSplatPly(rows: SplatRow[]): Buffer {
  const header =
    [
      "ply",
      "format binary_little_endian 1.0",
      `element vertex ${rows.length}`,
      ...PROPERTIES.map((p) => `property float ${p}`),
      "end_header",
    ].join("\n") + "\n";
  const body = Buffer.alloc(rows.length * PROPERTIES.length * 4);
  rows.forEach((row, i) => {
    PROPERTIES.forEach((p, j) => {
      body.writeFloatLE(row[p], (i * PROPERTIES.length + j) * 4);
    });
  });
  return Buffer.concat([Buffer.from(header, "ascii"), body]);
}

export function readSplatPly(raw: Buffer): {
  names: string[];
  rows: number[][];
} {
  const headerEnd = raw.indexOf("end_header");
  if (headerEnd < 0) throw new Error("not a PLY: no end_header");
  const bodyStart = raw.indexOf(0x0a, headerEnd) + 1;
  const header = raw.subarray(0, headerEnd).toString("ascii");

  const names: string[] = [];
  let count = 0;
  for (const line of header.split("\n")) {
    const parts = line.trim().split(/\s+/);
    if (parts[0] === "element" && parts[1] === "vertex") count = Number(parts[2]);
    if (parts[0] === "property") {
      if (parts[1] !== "float") throw new Error(`unsupported type ${parts[1]}`);
      names.push(parts[2]);
    }
  }
  const rows: number[][] = [];
  for (let i = 0; i < count; i++) {
    const row: number[] = [];
    for (let j = 0; j < names.length; j++) {
      row.push(raw.readFloatLE(bodyStart + (i * names.length + j) * 4));
    }
    rows.push(row);
  }
  return { names, rows };
}
