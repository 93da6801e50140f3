/**
 * Binary activation-tensor files, little-endian:
 *
 *   offset  size     field
 *   ------  -------  -----------------------------------
 *   0       4        magic "FMAP"
 *   4       1        format version, currently 1
 *   5       4        width  W  (uint32)
 *   9       4        height H  (uint32)
 *   13      4        channels C (uint32)
 *   17      4*W*H*C  float32 activations, row-major [H][W][C]
 *
 * Trailing bytes after the payload make a file malformed.
 */

import { writeFileSync, readFileSync } from "node:fs";

export const MAGIC = "FMAP";
export const FORMAT_VERSION = 1;
export const HEADER_SIZE = 17;

export interface Tensor {
  width: number;
  height: number;
  channels: number;
  /** row-major [height][width][channels] */
  data: Float32Array;
}

export function encodeTensor(t: Tensor): Buffer {
  const { width, height, channels, data } = t;
  if (
    !Number.isInteger(width) || width < 1 ||
    !Number.isInteger(height) || height < 1 ||
    !Number.isInteger(channels) || channels < 1
  ) {
    throw new Error(`tensor dimensions must be positive integers, got ${width}x${height}x${channels}`);
  }
  if (data.length !== width * height * channels) {
    throw new Error(`payload has ${data.length} floats, dims demand ${width * height * channels}`);
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new Error(`refusing to encode non-finite value at flat index ${i}`);
    }
  }
  const buf = Buffer.alloc(HEADER_SIZE + 4 * data.length);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt8(FORMAT_VERSION, 4);
  buf.writeUInt32LE(width, 5);
  buf.writeUInt32LE(height, 9);
  buf.writeUInt32LE(channels, 13);
  for (let i = 0; i < data.length; i++) {
    buf.writeFloatLE(data[i], HEADER_SIZE + 4 * i);
  }
  return buf;
}

export function decodeTensor(buf: Buffer): Tensor {
  if (buf.length < 4 || buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error("not a feature-tensor buffer (bad magic)");
  }
  if (buf.length < HEADER_SIZE) {
    throw new Error(`header truncated (${buf.length} bytes)`);
  }
  const version = buf.readUInt8(4);
  if (version !== FORMAT_VERSION) {
    throw new Error(`unsupported format version ${version} (expected ${FORMAT_VERSION})`);
  }
  const width = buf.readUInt32LE(5);
  const height = buf.readUInt32LE(9);
  const channels = buf.readUInt32LE(13);
  const expected = width * height * channels;
  const payloadBytes = buf.length - HEADER_SIZE;
  if (payloadBytes < 4 * expected) {
    throw new Error(`payload holds ${Math.floor(payloadBytes / 4)} floats, header declares ${expected}`);
  }
  if (payloadBytes > 4 * expected) {
    throw new Error(`${payloadBytes - 4 * expected} unexpected trailing bytes`);
  }
  const data = new Float32Array(expected);
  for (let i = 0; i < expected; i++) {
    data[i] = buf.readFloatLE(HEADER_SIZE + 4 * i);
  }
  return { width, height, channels, data };
}

export function writeTensorFile(t: Tensor, path: string): void {
  writeFileSync(path, encodeTensor(t));
}

export function readTensorFile(path: string): Tensor {
  return decodeTensor(readFileSync(path));
}
