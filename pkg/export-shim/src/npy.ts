/**
 * Minimal NPY v1.0 writer for little-endian float32 arrays.
 *
 * The emitted bytes match what numpy's own `np.save` produces for a
 * C-contiguous `<f4` array: magic, version 1.0, a space-padded header
 * dict whose total length is a multiple of 64, then the raw payload.
 */

import { endianness } from 'os';

const MAGIC = Buffer.from('\x93NUMPY\x01\x00', 'latin1');

export interface NpyArray {
  name: string;
  shape: number[];
  data: Float32Array;
}

function shapeLiteral(shape: number[]): string {
  if (shape.length === 0) return '()';
  if (shape.length === 1) return `(${shape[0]},)`;
  return `(${shape.join(', ')})`;
}

export function npyBytes(arr: NpyArray): Buffer {
  if (endianness() !== 'LE') {
    throw new Error("'<f4' payload requires a little-endian host");
  }
  const count = arr.shape.reduce((a, b) => a * b, 1);
  if (count !== arr.data.length) {
    throw new Error(
      `${arr.name}: shape (${arr.shape}) holds ${count} elements, data has ${arr.data.length}`);
  }
  let header =
      `{'descr': '<f4', 'fortran_order': False, 'shape': ${shapeLiteral(arr.shape)}, }`;
  // pad with spaces so magic + length word + header (incl. final \n) is 64-aligned
  const unpadded = MAGIC.length + 2 + header.length + 1;
  header += ' '.repeat((64 - unpadded % 64) % 64) + '\n';

  const head = Buffer.alloc(MAGIC.length + 2 + header.length);
  MAGIC.copy(head, 0);
  head.writeUInt16LE(header.length, MAGIC.length);
  head.write(header, MAGIC.length + 2, 'latin1');

  const payload = Buffer.from(arr.data.buffer, arr.data.byteOffset, arr.data.byteLength);
  return Buffer.concat([head, payload]);
}
