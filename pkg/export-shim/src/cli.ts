#!/usr/bin/env node
/**
 * export-shim: write a tfjs layers model's conv stack into the arrangement
 * toolkit's NPZ + manifest convention.
 *
 * Usage:
 *   export-shim MODEL --resolution HxW --out DIR [--run-id NAME]
 *
 * MODEL is a model.json path or a directory containing one. DIR receives
 * model.npz and manifest.json; point the toolkit at them with
 * `convarrange analyze DIR/model.npz`.
 */

import { mkdirSync, writeFileSync } from 'fs';
import { join } from 'path';

import { exportModel } from './export';
import { loadModelDir } from './model';
import { TraceFailure, UnsupportedLayer } from './trace';

const USAGE = 'usage: export-shim MODEL --resolution HxW --out DIR [--run-id NAME]';

interface Args {
  model: string;
  resolution: [number, number];
  out: string;
  runId?: string;
}

function fail(message: string): never {
  console.error(message);
  process.exit(1);
}

function parseResolution(text: string): [number, number] {
  const m = /^(\d+)x(\d+)$/.exec(text);
  if (!m) fail(`expected HxW (e.g. 224x224), got '${text}'`);
  return [parseInt(m[1], 10), parseInt(m[2], 10)];
}

function parseArgs(argv: string[]): Args {
  let model: string | undefined;
  let resolution: [number, number] | undefined;
  let out: string | undefined;
  let runId: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case '--resolution':
        resolution = parseResolution(argv[++i] ?? fail(USAGE));
        break;
      case '--out':
        out = argv[++i] ?? fail(USAGE);
        break;
      case '--run-id':
        runId = argv[++i] ?? fail(USAGE);
        break;
      case '--help':
      case '-h':
        console.log(USAGE);
        process.exit(0);
      default:
        if (argv[i].startsWith('-') || model !== undefined) fail(USAGE);
        model = argv[i];
    }
  }
  if (!model || !resolution || !out) fail(USAGE);
  return { model, resolution, out, runId };
}

async function main() {
  const args = parseArgs(process.argv.slice(2));
  try {
    const model = await loadModelDir(args.model);
    const result = exportModel(model, args.resolution, args.runId);

    mkdirSync(args.out, { recursive: true });
    writeFileSync(join(args.out, 'model.npz'), result.npz);
    writeFileSync(join(args.out, 'manifest.json'), result.manifest);

    for (const [i, conv] of result.trace.convs.entries()) {
      console.log(
          `conv${i + 1} <- ${conv.name}: F=${conv.filters} C=${conv.inChannels}` +
          ` k=${conv.kernel} at ${conv.inHeight}x${conv.inWidth}`);
    }
    if (result.trace.skipped.length > 0) {
      console.log(`skipped (non-conv trainable): ${result.trace.skipped.join(', ')}`);
    }
    console.log(`wrote ${join(args.out, 'model.npz')} (+ manifest.json)`);
  } catch (err) {
    if (err instanceof UnsupportedLayer || err instanceof TraceFailure) {
      console.error(`${err.constructor.name}: ${err.message}`);
      process.exit(2);
    }
    if ((err as NodeJS.ErrnoException).code === 'ENOENT') {
      console.error(`missing file: ${(err as Error).message}`);
      process.exit(2);
    }
    throw err;
  }
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
