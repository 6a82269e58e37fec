/**
 * Binary embedding-table format shared with the regionadapt Python package.
 *
 * Layout (little-endian throughout):
 *
 *   magic "DATE" | u32 version=1 | u32 rows | u32 dim | u8 normalized
 *   | rows*dim float32 row-major | u32 json_len | UTF-8 JSON array of item ids
 *
 * The reader applies the same checks as the Python side so a file accepted
 * here is accepted there and vice versa.
 */

import * as fs from 'node:fs';

export const MAGIC = 'DATE';
export const FORMAT_VERSION = 1;

// A table claiming unit rows may be off by at most this much (float32 storage).
const NORM_TOL = 1e-5;

export interface EmbeddingTable {
  /** Row-major values, rows*dim entries. */
  data: Float32Array;
  rows: number;
  dim: number;
  itemIds: string[];
  normalized: boolean;
}

export function makeTable(
  rows: number[][] | Float64Array[],
  itemIds: string[],
  normalized: boolean,
): EmbeddingTable {
  const n = rows.length;
  if (itemIds.length !== n) {
    throw new Error(`item id count ${itemIds.length} != row count ${n}`);
  }
  const dim = n > 0 ? rows[0].length : 0;
  const data = new Float32Array(n * dim);
  for (let i = 0; i < n; i++) {
    if (rows[i].length !== dim) {
      throw new Error(`row ${i} has length ${rows[i].length}, expected ${dim}`);
    }
    data.set(rows[i] as ArrayLike<number>, i * dim);
  }
  const table: EmbeddingTable = { data, rows: n, dim, itemIds: [...itemIds], normalized };
  if (normalized) {
    checkUnitRows(table);
  }
  return table;
}

function checkUnitRows(table: EmbeddingTable): void {
  for (let i = 0; i < table.rows; i++) {
    let ss = 0;
    for (let j = 0; j < table.dim; j++) {
      const v = table.data[i * table.dim + j];
      ss += v * v;
    }
    const err = Math.abs(Math.sqrt(ss) - 1);
    if (err > NORM_TOL) {
      throw new Error(`normalized table has row norm off by ${err.toExponential(2)} (row ${i})`);
    }
  }
}

export function encodeTable(table: EmbeddingTable): Buffer {
  if (table.data.length !== table.rows * table.dim) {
    throw new Error(`data length ${table.data.length} != rows*dim ${table.rows * table.dim}`);
  }
  if (table.itemIds.length !== table.rows) {
    throw new Error(`item id count ${table.itemIds.length} != row count ${table.rows}`);
  }
  const idsBlob = Buffer.from(JSON.stringify(table.itemIds), 'utf-8');
  const buf = Buffer.alloc(4 + 12 + 1 + table.data.length * 4 + 4 + idsBlob.length);
  let pos = buf.write(MAGIC, 0, 'ascii');
  pos = buf.writeUInt32LE(FORMAT_VERSION, pos);
  pos = buf.writeUInt32LE(table.rows, pos);
  pos = buf.writeUInt32LE(table.dim, pos);
  pos = buf.writeUInt8(table.normalized ? 1 : 0, pos);
  for (let i = 0; i < table.data.length; i++) {
    pos = buf.writeFloatLE(table.data[i], pos);
  }
  pos = buf.writeUInt32LE(idsBlob.length, pos);
  idsBlob.copy(buf, pos);
  return buf;
}

export function decodeTable(buf: Buffer): EmbeddingTable {
  let pos = 0;
  const need = (count: number, what: string): number => {
    if (pos + count > buf.length) {
      throw new Error(`truncated payload while reading ${what}`);
    }
    const at = pos;
    pos += count;
    return at;
  };

  const magic = buf.subarray(need(4, 'magic'), pos).toString('ascii');
  if (magic !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(magic)}, expected ${JSON.stringify(MAGIC)}`);
  }
  const version = buf.readUInt32LE(need(4, 'version'));
  if (version !== FORMAT_VERSION) {
    throw new Error(`unsupported version ${version}`);
  }
  const rows = buf.readUInt32LE(need(4, 'row count'));
  const dim = buf.readUInt32LE(need(4, 'dim'));
  const flag = buf.readUInt8(need(1, 'normalized flag'));
  if (flag !== 0 && flag !== 1) {
    throw new Error(`invalid normalized flag ${flag}`);
  }

  const data = new Float32Array(rows * dim);
  const dataStart = need(rows * dim * 4, 'embedding data');
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readFloatLE(dataStart + i * 4);
  }

  const idsLen = buf.readUInt32LE(need(4, 'id block length'));
  const idsBlob = buf.subarray(need(idsLen, 'item ids'), pos).toString('utf-8');
  if (pos !== buf.length) {
    throw new Error(`trailing bytes after table payload (${buf.length - pos})`);
  }
  const itemIds: unknown = JSON.parse(idsBlob);
  if (!Array.isArray(itemIds) || itemIds.some(v => typeof v !== 'string')) {
    throw new Error('item id block is not a JSON array of strings');
  }
  if (itemIds.length !== rows) {
    throw new Error(`item id count mismatch: ${itemIds.length} ids for ${rows} rows`);
  }

  const table: EmbeddingTable = { data, rows, dim, itemIds: itemIds as string[], normalized: flag === 1 };
  if (table.normalized && rows > 0) {
    checkUnitRows(table);
  }
  return table;
}

export function writeTable(path: string, table: EmbeddingTable): void {
  fs.writeFileSync(path, encodeTable(table));
}

export function readTable(path: string): EmbeddingTable {
  return decodeTable(fs.readFileSync(path));
}
