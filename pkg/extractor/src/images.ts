/** Image decoding (PNG and JPEG) into float RGB tensors. */

import { readFileSync } from "node:fs";
import * as tf from "@tensorflow/tfjs";
import { PNG } from "pngjs";
import jpeg from "jpeg-js";

export const IMAGE_EXTENSIONS = new Set([".png", ".jpg", ".jpeg"]);

interface RawImage {
  width: number;
  height: number;
  /** RGBA, 4 bytes per pixel */
  data: Uint8Array;
}

function decodeBytes(bytes: Buffer): RawImage {
  if (bytes.length >= 8 && bytes.readUInt32BE(0) === 0x89504e47) {
    const png = PNG.sync.read(bytes);
    return { width: png.width, height: png.height, data: png.data };
  }
  if (bytes.length >= 3 && bytes[0] === 0xff && bytes[1] === 0xd8 && bytes[2] === 0xff) {
    const img = jpeg.decode(bytes, { useTArray: true });
    return { width: img.width, height: img.height, data: img.data };
  }
  throw new Error("unrecognized image container (expected PNG or JPEG)");
}

/**
 * Decode one image file and resize to size x size.
 * Values are scaled to [0,1] and centered at 0 ((v/255) - 0.5).
 */
export function loadImage(path: string, size: number): tf.Tensor3D {
  const raw = decodeBytes(readFileSync(path));
  const pixels = raw.width * raw.height;
  const rgb = new Float32Array(pixels * 3);
  for (let i = 0; i < pixels; i++) {
    rgb[3 * i] = raw.data[4 * i] / 255 - 0.5;
    rgb[3 * i + 1] = raw.data[4 * i + 1] / 255 - 0.5;
    rgb[3 * i + 2] = raw.data[4 * i + 2] / 255 - 0.5;
  }
  return tf.tidy(() => {
    const img = tf.tensor3d(rgb, [raw.height, raw.width, 3]);
    if (raw.height === size && raw.width === size) return img.clone();
    return tf.image.resizeBilinear(img, [size, size]);
  });
}

/** Encode an RGB byte image as a PNG buffer (used by tests and tooling). */
export function encodePng(width: number, height: number, rgb: Uint8Array): Uint8Array {
  const png = new PNG({ width, height });
  for (let i = 0; i < width * height; i++) {
    png.data[4 * i] = rgb[3 * i];
    png.data[4 * i + 1] = rgb[3 * i + 1];
    png.data[4 * i + 2] = rgb[3 * i + 2];
    png.data[4 * i + 3] = 255;
  }
  return PNG.sync.write(png);
}
