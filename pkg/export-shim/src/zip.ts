/**
 * Deterministic ZIP writer for NPZ archives.
 *
 * Entries are stored uncompressed (method 0), the same choice `np.savez`
 * makes, with a fixed 1980-01-01 timestamp so identical arrays always
 * produce identical bytes. No zip64: fine for checkpoint-sized payloads.
 */

import { crc32 } from 'zlib';

import { NpyArray, npyBytes } from './npy';

const DOS_DATE = 0x0021; // 1980-01-01, the earliest valid DOS date

export interface ZipEntry {
  name: string;
  data: Buffer;
}

function localHeader(entry: ZipEntry, crc: number): Buffer {
  const name = Buffer.from(entry.name, 'ascii');
  const head = Buffer.alloc(30 + name.length);
  head.writeUInt32LE(0x04034b50, 0);
  head.writeUInt16LE(20, 4); // version needed
  head.writeUInt16LE(0, 6); // flags
  head.writeUInt16LE(0, 8); // method: stored
  head.writeUInt16LE(0, 10); // mod time
  head.writeUInt16LE(DOS_DATE, 12);
  head.writeUInt32LE(crc, 14);
  head.writeUInt32LE(entry.data.length, 18);
  head.writeUInt32LE(entry.data.length, 22);
  head.writeUInt16LE(name.length, 26);
  head.writeUInt16LE(0, 28); // extra length
  name.copy(head, 30);
  return head;
}

function centralHeader(entry: ZipEntry, crc: number, offset: number): Buffer {
  const name = Buffer.from(entry.name, 'ascii');
  const head = Buffer.alloc(46 + name.length);
  head.writeUInt32LE(0x02014b50, 0);
  head.writeUInt16LE(20, 4); // version made by
  head.writeUInt16LE(20, 6); // version needed
  head.writeUInt16LE(0, 8);
  head.writeUInt16LE(0, 10);
  head.writeUInt16LE(0, 12);
  head.writeUInt16LE(DOS_DATE, 14);
  head.writeUInt32LE(crc, 16);
  head.writeUInt32LE(entry.data.length, 20);
  head.writeUInt32LE(entry.data.length, 24);
  head.writeUInt16LE(name.length, 28);
  // extra, comment, disk, internal attrs, external attrs: all zero
  head.writeUInt32LE(offset, 42);
  name.copy(head, 46);
  return head;
}

export function zipBytes(entries: ZipEntry[]): Buffer {
  const parts: Buffer[] = [];
  const central: Buffer[] = [];
  let offset = 0;
  for (const entry of entries) {
    const crc = crc32(entry.data);
    const local = localHeader(entry, crc);
    central.push(centralHeader(entry, crc, offset));
    parts.push(local, entry.data);
    offset += local.length + entry.data.length;
  }
  const centralSize = central.reduce((n, b) => n + b.length, 0);
  const end = Buffer.alloc(22);
  end.writeUInt32LE(0x06054b50, 0);
  end.writeUInt16LE(entries.length, 8);
  end.writeUInt16LE(entries.length, 10);
  end.writeUInt32LE(centralSize, 12);
  end.writeUInt32LE(offset, 16);
  return Buffer.concat([...parts, ...central, end]);
}

/** NPZ convention: each array is a stored `<name>.npy` member. */
export function npzBytes(arrays: NpyArray[]): Buffer {
  return zipBytes(arrays.map((a) => ({ name: a.name + '.npy', data: npyBytes(a) })));
}
