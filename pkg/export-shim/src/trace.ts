/**
 * Geometry inference for sequential conv stacks.
 *
 * Weight files alone do not say what spatial extent each conv layer saw, so
 * the exporter threads a symbolic input shape through the model layer by
 * layer and records every conv's input geometry at the requested resolution.
 */

import * as tf from '@tensorflow/tfjs';

/** A layer that cannot be expressed in the toolkit's geometry model. */
export class UnsupportedLayer extends Error {}

/** The symbolic forward pass could not determine a layer's shapes. */
export class TraceFailure extends Error {}

export interface ConvTrace {
  name: string;
  filters: number;
  inChannels: number;
  inHeight: number;
  inWidth: number;
  kernel: number;
  stride: number;
  padding: number;
}

export interface ModelTrace {
  convs: ConvTrace[];
  /** trainable non-conv layers, listed but never exported */
  skipped: string[];
}

// conv variants the geometry model has no row structure for
const REJECTED_CONVS = new Set([
  'Conv1D', 'Conv3D', 'Conv2DTranspose', 'DepthwiseConv2D', 'SeparableConv2D',
]);

function single(pair: number | number[], what: string, layer: string): number {
  const [a, b] = Array.isArray(pair) ? pair : [pair, pair];
  if (a !== b) {
    throw new UnsupportedLayer(`${layer}: non-square ${what} [${a}, ${b}]`);
  }
  return a;
}

function convTrace(layer: tf.layers.Layer, shape: number[]): ConvTrace {
  const config = layer.getConfig() as any;
  if (config.dataFormat === 'channelsFirst') {
    throw new UnsupportedLayer(`${layer.name}: channelsFirst data format`);
  }
  const kernel = single(config.kernelSize, 'kernel', layer.name);
  const stride = single(config.strides, 'stride', layer.name);
  if (single(config.dilationRate ?? 1, 'dilation', layer.name) !== 1) {
    throw new UnsupportedLayer(`${layer.name}: dilated convolution`);
  }
  let padding = 0;
  if (config.padding === 'same') {
    // symmetric only: odd kernel at stride 1 pads (k-1)/2 on each side
    if (stride !== 1 || kernel % 2 === 0) {
      throw new UnsupportedLayer(
        `${layer.name}: 'same' padding is asymmetric for kernel ${kernel}, stride ${stride}`);
    }
    padding = (kernel - 1) / 2;
  } else if (config.padding !== 'valid') {
    throw new UnsupportedLayer(`${layer.name}: padding mode ${config.padding}`);
  }
  if (shape.length !== 3) {
    throw new TraceFailure(`${layer.name}: conv input is not H x W x C, got [${shape}]`);
  }
  const [height, width, channels] = shape;
  return {
    name: layer.name,
    filters: config.filters,
    inChannels: channels,
    inHeight: height,
    inWidth: width,
    kernel,
    stride,
    padding,
  };
}

function threadShape(layer: tf.layers.Layer, shape: number[]): number[] {
  let out: unknown;
  try {
    out = layer.computeOutputShape([null, ...shape]);
  } catch (err) {
    throw new TraceFailure(`${layer.name}: ${(err as Error).message}`);
  }
  if (!Array.isArray(out) || Array.isArray(out[0])) {
    throw new TraceFailure(`${layer.name}: expected a single output, got ${JSON.stringify(out)}`);
  }
  const dims = out.slice(1);
  if (!dims.every((d) => typeof d === 'number' && Number.isInteger(d) && d > 0)) {
    throw new TraceFailure(`${layer.name}: undetermined output shape ${JSON.stringify(out)}`);
  }
  return dims as number[];
}

/**
 * Walk the model in forward order, recording each Conv2D's input geometry.
 *
 * The model must be a single chain: every layer feeds exactly the next one.
 * Branching or multi-input topologies raise TraceFailure.
 */
export function traceModel(model: tf.LayersModel, resolution: [number, number]): ModelTrace {
  const layers = model.layers.filter((l) => l.getClassName() !== 'InputLayer');
  if (layers.length === 0) {
    throw new TraceFailure('model has no layers');
  }
  for (const layer of layers) {
    if (layer.inboundNodes.length !== 1 || layer.inboundNodes[0].inboundLayers.length > 1) {
      throw new TraceFailure(`${layer.name}: model is not a single chain of layers`);
    }
  }

  if (model.inputs.length !== 1 || model.inputs[0].shape.length !== 4) {
    throw new TraceFailure(
        `expected one NHWC input, got ${JSON.stringify(model.inputs.map((t) => t.shape))}`);
  }
  const channels = model.inputs[0].shape[3];
  if (typeof channels !== 'number') {
    throw new TraceFailure('input channel count is undetermined');
  }

  const [height, width] = resolution;
  let shape = [height, width, channels];
  const convs: ConvTrace[] = [];
  const skipped: string[] = [];
  for (const layer of layers) {
    const kind = layer.getClassName();
    if (kind === 'Conv2D') {
      convs.push(convTrace(layer, shape));
    } else if (REJECTED_CONVS.has(kind)) {
      throw new UnsupportedLayer(`${layer.name}: ${kind} has no dense-row geometry`);
    } else if (layer.trainableWeights.length > 0) {
      skipped.push(layer.name);
    }
    shape = threadShape(layer, shape);
  }
  return { convs, skipped };
}
