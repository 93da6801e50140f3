/**
 * Deterministic AlexNet-geometry conv stacks.
 *
 * No pretrained weights ship with this package and none can be downloaded
 * at build time, so the registered model fills an AlexNet-shaped stack
 * with seeded He-scaled random weights.  That keeps channel counts and
 * receptive fields realistic (conv3 = 384 maps, conv5 = 256 maps) and the
 * whole pipeline exercisable end to end; it does not promise pretrained
 * feature quality.
 */

import * as tf from "@tensorflow/tfjs";
import { gaussianArray, mulberry32 } from "./rng.js";

export interface ModelSpec {
  /** published input edge length; extraction resizes to this unless overridden */
  inputSize: number;
  weightSeed: number;
}

export const MODELS: Record<string, ModelSpec> = {
  "alexnet-random": { inputSize: 227, weightSeed: 20240817 },
};

/** conv layers exposed for extraction, with their map counts */
export const LAYER_CHANNELS: Record<string, number> = {
  conv1: 96,
  conv2: 256,
  conv3: 384,
  conv4: 384,
  conv5: 256,
};

export function buildModel(name: string): tf.LayersModel {
  const spec = MODELS[name];
  if (!spec) {
    throw new Error(
      `unknown model '${name}' (available: ${Object.keys(MODELS).join(", ")})`,
    );
  }
  const model = tf.sequential({
    layers: [
      tf.layers.conv2d({
        name: "conv1",
        inputShape: [null, null, 3],
        filters: LAYER_CHANNELS.conv1,
        kernelSize: 11,
        strides: 4,
        activation: "relu",
      }),
      tf.layers.maxPooling2d({ name: "pool1", poolSize: 3, strides: 2 }),
      tf.layers.conv2d({
        name: "conv2",
        filters: LAYER_CHANNELS.conv2,
        kernelSize: 5,
        padding: "same",
        activation: "relu",
      }),
      tf.layers.maxPooling2d({ name: "pool2", poolSize: 3, strides: 2 }),
      tf.layers.conv2d({
        name: "conv3",
        filters: LAYER_CHANNELS.conv3,
        kernelSize: 3,
        padding: "same",
        activation: "relu",
      }),
      tf.layers.conv2d({
        name: "conv4",
        filters: LAYER_CHANNELS.conv4,
        kernelSize: 3,
        padding: "same",
        activation: "relu",
      }),
      tf.layers.conv2d({
        name: "conv5",
        filters: LAYER_CHANNELS.conv5,
        kernelSize: 3,
        padding: "same",
        activation: "relu",
      }),
    ],
  });
  seedWeights(model, spec.weightSeed);
  return model;
}

// Per-layer gain on top of He scaling.  Relu stacks are positively
// homogeneous, so this only rescales activations; it lifts them from the
// ~0.3 std a variance-preserving random stack produces to the order of
// magnitude pretrained conv layers emit, which downstream distance-based
// thresholds are tuned for.
const WEIGHT_GAIN = 2.2;

function seedWeights(model: tf.LayersModel, seed: number): void {
  const rng = mulberry32(seed);
  for (const layer of model.layers) {
    const current = layer.getWeights();
    if (current.length === 0) continue; // pooling layers
    const [kernel, bias] = current;
    const kShape = kernel.shape as number[];
    const fanIn = kShape[0] * kShape[1] * kShape[2];
    const std = WEIGHT_GAIN * Math.sqrt(2.0 / fanIn);
    const kData = gaussianArray(rng, kShape.reduce((a, b) => a * b, 1), std);
    layer.setWeights([
      tf.tensor(kData, kShape as [number, number, number, number]),
      tf.zeros(bias.shape),
    ]);
  }
}

/** Model truncated at the named layer; unknown layer is a fatal error. */
export function activationModel(model: tf.LayersModel, layerName: string): tf.LayersModel {
  let layer: tf.layers.Layer;
  try {
    layer = model.getLayer(layerName);
  } catch {
    const names = model.layers.map((l) => l.name).join(", ");
    throw new Error(`layer '${layerName}' does not exist in this model (layers: ${names})`);
  }
  return tf.model({ inputs: model.inputs, outputs: layer.output as tf.SymbolicTensor });
}
