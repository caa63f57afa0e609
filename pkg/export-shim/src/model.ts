/**
 * Disk IO for tfjs layers models without the node backend: model.json plus
 * binary weight shards, moved through tf.io memory handlers.
 */

import { mkdirSync, readFileSync, writeFileSync } from 'fs';
import { dirname, join } from 'path';

import * as tf from '@tensorflow/tfjs';

/** Write model.json + weights.bin into dir (created if needed). */
export async function saveModelDir(model: tf.LayersModel, dir: string): Promise<void> {
  mkdirSync(dir, { recursive: true });
  await model.save(tf.io.withSaveHandler(async (artifacts) => {
    const weightData = tf.io.CompositeArrayBuffer.join(artifacts.weightData);
    const modelJSON = {
      modelTopology: artifacts.modelTopology,
      format: 'layers-model',
      generatedBy: 'export-shim',
      convertedBy: null,
      weightsManifest: [{ paths: ['weights.bin'], weights: artifacts.weightSpecs }],
    };
    writeFileSync(join(dir, 'model.json'), JSON.stringify(modelJSON));
    writeFileSync(join(dir, 'weights.bin'), Buffer.from(weightData));
    return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } };
  }));
}

/** Load from a model.json path or a directory containing one. */
export async function loadModelDir(path: string): Promise<tf.LayersModel> {
  const jsonPath = path.endsWith('.json') ? path : join(path, 'model.json');
  const modelJSON = JSON.parse(readFileSync(jsonPath, 'utf8'));
  const dir = dirname(jsonPath);

  const specs: tf.io.WeightsManifestEntry[] = [];
  const shards: Buffer[] = [];
  for (const group of modelJSON.weightsManifest ?? []) {
    specs.push(...group.weights);
    for (const shard of group.paths) {
      shards.push(readFileSync(join(dir, shard)));
    }
  }
  const weights = Buffer.concat(shards);
  return tf.loadLayersModel(tf.io.fromMemory({
    modelTopology: modelJSON.modelTopology,
    weightSpecs: specs,
    weightData: weights.buffer.slice(weights.byteOffset, weights.byteOffset + weights.byteLength),
  }));
}
