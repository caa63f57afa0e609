/**
 * Convert a tfjs layers model into the arrangement toolkit's checkpoint
 * convention: an NPZ of convN.weight (F,C,k,k) / convN.bias (F,) float32
 * records plus a manifest.json carrying each layer's traced input geometry.
 */

import * as tf from '@tensorflow/tfjs';

import { NpyArray } from './npy';
import { npzBytes } from './zip';
import { ConvTrace, ModelTrace, traceModel, UnsupportedLayer } from './trace';

export interface ExportResult {
  npz: Buffer;
  manifest: string;
  trace: ModelTrace;
}

function manifestLayer(conv: ConvTrace, id: number) {
  return {
    layer_id: id,
    kind: 'conv',
    name: conv.name,
    weight: `conv${id}.weight`,
    bias: `conv${id}.bias`,
    filters: conv.filters,
    geometry: {
      in_channels: conv.inChannels,
      in_height: conv.inHeight,
      in_width: conv.inWidth,
      kernel: conv.kernel,
      stride: conv.stride,
      padding: conv.padding,
      padding_mode: 'zero',
    },
  };
}

/** tfjs stores conv kernels as [kh, kw, C, F]; the toolkit wants [F, C, kh, kw]. */
function kernelRecord(layer: tf.layers.Layer, id: number): NpyArray {
  const kernel = layer.getWeights()[0];
  const data = tf.tidy(() => tf.transpose(kernel, [3, 2, 0, 1]).dataSync()) as Float32Array;
  const [kh, kw, channels, filters] = kernel.shape;
  return { name: `conv${id}.weight`, shape: [filters, channels, kh, kw], data };
}

function biasRecord(layer: tf.layers.Layer, id: number, filters: number): NpyArray {
  const weights = layer.getWeights();
  const data = weights.length > 1
      ? (weights[1].dataSync() as Float32Array)
      : new Float32Array(filters); // bias-free conv acts like a zero bias
  return { name: `conv${id}.bias`, shape: [filters], data };
}

export function exportModel(
    model: tf.LayersModel, resolution: [number, number], runId?: string): ExportResult {
  const trace = traceModel(model, resolution);
  if (trace.convs.length === 0) {
    throw new UnsupportedLayer('model has no Conv2D layers to export');
  }
  const convLayers = model.layers.filter((l) => l.getClassName() === 'Conv2D');

  const records: NpyArray[] = [];
  trace.convs.forEach((conv, i) => {
    records.push(kernelRecord(convLayers[i], i + 1));
    records.push(biasRecord(convLayers[i], i + 1, conv.filters));
  });

  const doc = {
    run_id: runId ?? model.name,
    epoch: 0,
    normalization: `weights exported unmodified; geometry traced at ${resolution[0]}x${resolution[1]}`,
    layers: trace.convs.map((conv, i) => manifestLayer(conv, i + 1)),
    skipped: trace.skipped,
  };
  return {
    npz: npzBytes(records),
    manifest: JSON.stringify(doc, null, 2) + '\n',
    trace,
  };
}

/**
 * In-framework projection cosines, one Float32Array per conv layer in
 * forward order: sum(w) / (||w|| * sqrt(C*H*W)) against the traced input
 * geometry. The independent reference for cross-checking the exported NPZ.
 */
export function projectionCosines(
    model: tf.LayersModel, resolution: [number, number]): Float32Array[] {
  const trace = traceModel(model, resolution);
  const convLayers = model.layers.filter((l) => l.getClassName() === 'Conv2D');
  return trace.convs.map((conv, i) => {
    const kernel = convLayers[i].getWeights()[0];
    return tf.tidy(() => {
      const sums = kernel.sum([0, 1, 2]);
      const norms = kernel.square().sum([0, 1, 2]).sqrt();
      const dim = Math.sqrt(conv.inChannels * conv.inHeight * conv.inWidth);
      return sums.div(norms.mul(dim)).dataSync() as Float32Array;
    });
  });
}
