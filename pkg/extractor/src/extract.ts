/** Core extraction job: image directory -> FMAP tensors + manifest. */

import { mkdirSync, readdirSync } from "node:fs";
import { basename, extname, join } from "node:path";
import * as tf from "@tensorflow/tfjs";
import { writeTensorFile, type Tensor } from "./fmap.js";
import { IMAGE_EXTENSIONS, loadImage } from "./images.js";
import { activationModel, buildModel, MODELS } from "./model.js";
import {
  loadPositionsFile,
  projectPositions,
  writeManifest,
  type ManifestEntry,
} from "./manifest.js";

export interface ExtractorJob {
  imageDir: string;
  model: string;
  layerName: string;
  outputDir: string;
  positionsFile?: string;
  /** overrides the model's published input size (recorded in the manifest) */
  inputSize?: number;
  log?: (message: string) => void;
}

export interface ExtractSummary {
  written: string[];
  skipped: string[];
  manifestPath: string;
  width: number;
  height: number;
  channels: number;
}

export function listImageFiles(imageDir: string): string[] {
  const files = readdirSync(imageDir)
    .filter((f) => IMAGE_EXTENSIONS.has(extname(f).toLowerCase()))
    .sort(); // manifest order is lexicographic by filename
  if (files.length === 0) {
    throw new Error(`no images found in ${imageDir}`);
  }
  return files;
}

export async function extract(job: ExtractorJob): Promise<ExtractSummary> {
  const log = job.log ?? ((m) => console.warn(m));
  const files = listImageFiles(job.imageDir);
  const spec = MODELS[job.model];
  const full = buildModel(job.model); // throws on unknown model
  const truncated = activationModel(full, job.layerName); // throws on unknown layer
  const inputSize = job.inputSize ?? spec.inputSize;

  let positions: Map<string, [number, number]> | undefined;
  if (job.positionsFile) {
    positions = projectPositions(loadPositionsFile(job.positionsFile));
  }

  const tensorDir = join(job.outputDir, "tensors");
  mkdirSync(tensorDir, { recursive: true });

  const entries: ManifestEntry[] = [];
  const written: string[] = [];
  const skipped: string[] = [];
  const seen = new Set<string>();
  let dims: [number, number, number] | undefined;

  for (const file of files) {
    const id = basename(file, extname(file));
    if (seen.has(id)) {
      throw new Error(`duplicate image id '${id}' (same basename, different extension)`);
    }
    seen.add(id);

    let image: tf.Tensor3D;
    try {
      image = loadImage(join(job.imageDir, file), inputSize);
    } catch (err) {
      log(`skipping unreadable image ${file}: ${(err as Error).message}`);
      skipped.push(file);
      continue;
    }

    const activation = tf.tidy(
      () => truncated.predict(image.expandDims(0)) as tf.Tensor4D,
    );
    image.dispose();
    const [, height, width, channels] = activation.shape;
    if (!dims) {
      dims = [width, height, channels];
    } else if (dims[0] !== width || dims[1] !== height || dims[2] !== channels) {
      throw new Error(`activation dims changed mid-traverse at ${file}`); // same resize, same model: unreachable
    }
    const data = (await activation.data()) as Float32Array;
    activation.dispose();

    const tensor: Tensor = { width, height, channels, data };
    const tensorPath = join("tensors", `${id}.fmap`);
    writeTensorFile(tensor, join(job.outputDir, tensorPath));

    const entry: ManifestEntry = { id, tensor_path: tensorPath };
    if (positions) {
      const pos = positions.get(id);
      if (!pos) {
        throw new Error(`positions file has no entry for image id '${id}'`);
      }
      entry.position = pos;
    }
    entries.push(entry);
    written.push(id);
  }

  if (entries.length === 0 || !dims) {
    throw new Error(`every image in ${job.imageDir} was unreadable`);
  }

  const manifestPath = join(job.outputDir, "manifest.yaml");
  writeManifest(
    manifestPath,
    job.layerName,
    positions ? "metric" : "frame",
    { model: job.model, input_size: inputSize, pixel_scale: "(v/255)-0.5" },
    entries,
  );
  return {
    written,
    skipped,
    manifestPath,
    width: dims[0],
    height: dims[1],
    channels: dims[2],
  };
}
