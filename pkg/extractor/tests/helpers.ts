/** Shared test utilities: synthetic place imagery and Python interop probes. */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { spawnSync } from "node:child_process";
import { encodePng } from "../src/images.js";
import { mulberry32, type Rng } from "../src/rng.js";

export const GRID = 8; // coarse structure cells per image edge

function clamp255(v: number): number {
  return v < 0 ? 0 : v > 255 ? 255 : Math.round(v);
}

/**
 * Render one place under one condition.  A place is a fixed coarse color
 * grid; the query condition adds a global warm brightness shift plus its
 * own pixel noise, so some random-net channels end up condition-driven.
 */
export function renderPlace(
  place: number,
  condition: "reference" | "query",
  size: number,
  seed: number,
  noiseRng: Rng,
): Uint8Array {
  const structure = mulberry32(seed * 7919 + place);
  const grid = new Uint8Array(GRID * GRID * 3);
  for (let i = 0; i < grid.length; i++) grid[i] = Math.floor(structure() * 256);

  const shift = condition === "query" ? [55, 30, -35] : [0, 0, 0];
  const rgb = new Uint8Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    const gy = Math.floor((y * GRID) / size);
    for (let x = 0; x < size; x++) {
      const gx = Math.floor((x * GRID) / size);
      for (let c = 0; c < 3; c++) {
        const base = grid[(gy * GRID + gx) * 3 + c];
        const noise = (noiseRng() - 0.5) * 30;
        rgb[(y * size + x) * 3 + c] = clamp255(base + shift[c] + noise);
      }
    }
  }
  return rgb;
}

export interface TraverseDirs {
  reference: string;
  query: string;
  calibration: string;
}

/** Write PNG traverses: refs for all places, queries for all, calibration for the first few. */
export function writeImageTraverses(
  root: string,
  places: number,
  calibCount: number,
  size: number,
  seed: number,
): TraverseDirs {
  const dirs = {
    reference: join(root, "images_ref"),
    query: join(root, "images_qry"),
    calibration: join(root, "images_cal"),
  };
  for (const d of Object.values(dirs)) mkdirSync(d, { recursive: true });
  const noise = mulberry32(seed);
  for (let p = 0; p < places; p++) {
    const name = String(p).padStart(4, "0");
    writeFileSync(
      join(dirs.reference, `ref_${name}.png`),
      encodePng(size, size, renderPlace(p, "reference", size, seed, noise)),
    );
    writeFileSync(
      join(dirs.query, `qry_${name}.png`),
      encodePng(size, size, renderPlace(p, "query", size, seed, noise)),
    );
    if (p < calibCount) {
      writeFileSync(
        join(dirs.calibration, `cal_${name}.png`),
        encodePng(size, size, renderPlace(p, "query", size, seed, noise)),
      );
    }
  }
  return dirs;
}

export function identityCorrespondences(path: string, count: number): void {
  const lines = [];
  for (let i = 0; i < count; i++) lines.push(`- ${i}`);
  writeFileSync(path, lines.join("\n") + "\n");
}

let pythonProbe: boolean | undefined;

/** True when python3 with the matching pipeline package is on PATH. */
export function pythonPipelineAvailable(): boolean {
  if (pythonProbe === undefined) {
    const res = spawnSync("python3", ["-c", "import vprfilter"], { timeout: 30000 });
    pythonProbe = res.status === 0;
  }
  return pythonProbe;
}

export function runPython(args: string[], cwd: string): { status: number; output: string } {
  const res = spawnSync("python3", ["-m", "vprfilter.cli", ...args], {
    cwd,
    timeout: 300000,
    encoding: "utf-8",
  });
  return { status: res.status ?? -1, output: `${res.stdout}\n${res.stderr}` };
}
