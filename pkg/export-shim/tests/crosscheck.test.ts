import { execFileSync } from 'child_process';
import { mkdtempSync, readFileSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';

import { describe, expect, it } from 'vitest';

import { exportModel, projectionCosines } from '../src/export';
import { toyModel } from './models';

/** cosines.csv rows keyed (layer_id, filter_index). */
function readCosines(path: string): Map<string, number> {
  const rows = readFileSync(path, 'utf8').trim().split('\n');
  expect(rows[0]).toBe('layer_id,filter_index,cosine');
  const out = new Map<string, number>();
  for (const row of rows.slice(1)) {
    const [layer, index, cosine] = row.split(',');
    out.set(`${layer}:${index}`, parseFloat(cosine));
  }
  return out;
}

describe('cross-check against the analysis toolkit', () => {
  it('toolkit cosines match the in-framework values to 1e-6', () => {
    const model = toyModel();
    const expected = projectionCosines(model, [16, 16]);
    const result = exportModel(model, [16, 16]);

    const dir = mkdtempSync(join(tmpdir(), 'crosscheck-'));
    writeFileSync(join(dir, 'model.npz'), result.npz);
    writeFileSync(join(dir, 'manifest.json'), result.manifest);

    const report = join(dir, 'report');
    const stdout = execFileSync(
      'convarrange', ['analyze', join(dir, 'model.npz'), '--out', report],
      { encoding: 'utf8' });
    expect(stdout).toContain("run 'toy2' epoch 0");

    const cosines = readCosines(join(report, 'cosines.csv'));
    // one row per filter means every record in the archive parsed
    expect(cosines.size).toBe(4 + 8);
    let worst = 0;
    expected.forEach((layer, i) => {
      layer.forEach((value, j) => {
        const got = cosines.get(`${i + 1}:${j}`);
        expect(got).toBeDefined();
        worst = Math.max(worst, Math.abs(got! - value));
      });
    });
    expect(worst).toBeLessThanOrEqual(1e-6);
  });
});
