/** Traverse manifest emission and GPS-to-planar projection. */

import { writeFileSync, readFileSync } from "node:fs";
import { dump as dumpYaml, load as loadYaml } from "js-yaml";

export interface ManifestEntry {
  id: string;
  tensor_path: string;
  position?: [number, number];
}

export interface Preprocessing {
  model: string;
  input_size: number;
  pixel_scale: string;
}

const EARTH_RADIUS_METERS = 6378137.0;

/**
 * Project WGS84 lat/lon onto a local tangent plane around the first
 * coordinate (equirectangular approximation; fine at traverse scale).
 * Input: mapping id -> [lat, lon] in degrees.  Output: id -> [x, y] meters.
 */
export function projectPositions(
  latlon: Map<string, [number, number]>,
): Map<string, [number, number]> {
  const out = new Map<string, [number, number]>();
  const first = latlon.values().next();
  if (first.done) return out;
  const [lat0, lon0] = first.value;
  const rad = Math.PI / 180;
  const cosLat0 = Math.cos(lat0 * rad);
  for (const [id, [lat, lon]] of latlon) {
    const x = EARTH_RADIUS_METERS * (lon - lon0) * rad * cosLat0;
    const y = EARTH_RADIUS_METERS * (lat - lat0) * rad;
    out.set(id, [x, y]);
  }
  return out;
}

/** Read a YAML positions file: mapping of image id -> [lat, lon] degrees. */
export function loadPositionsFile(path: string): Map<string, [number, number]> {
  const doc = loadYaml(readFileSync(path, "utf-8"));
  if (doc === null || typeof doc !== "object" || Array.isArray(doc)) {
    throw new Error(`${path}: positions file must be a mapping of id -> [lat, lon]`);
  }
  const out = new Map<string, [number, number]>();
  for (const [id, raw] of Object.entries(doc as Record<string, unknown>)) {
    if (!Array.isArray(raw) || raw.length !== 2) {
      throw new Error(`${path}: position for '${id}' must be a [lat, lon] pair`);
    }
    const lat = Number(raw[0]);
    const lon = Number(raw[1]);
    if (!Number.isFinite(lat) || !Number.isFinite(lon)) {
      throw new Error(`${path}: position for '${id}' must be finite numbers`);
    }
    out.set(id, [lat, lon]);
  }
  return out;
}

export function writeManifest(
  path: string,
  layerName: string,
  gtMode: "frame" | "metric",
  preprocessing: Preprocessing,
  entries: ManifestEntry[],
): void {
  const doc = {
    layer_name: layerName,
    gt_mode: gtMode,
    preprocessing,
    entries: entries.map((e) => {
      const raw: Record<string, unknown> = { id: e.id, tensor_path: e.tensor_path };
      if (e.position) raw.position = [e.position[0], e.position[1]];
      return raw;
    }),
  };
  writeFileSync(path, dumpYaml(doc, { sortKeys: false }));
}
