/** The binary embedding interchange format shared with the engine.
 *
 * Layout: 8-byte magic "DRFTEMB1", u32 count, u32 dim (little endian),
 * then count * dim float32 values, row major. Round-trips are bit-exact.
 */

import { readFileSync, renameSync, writeFileSync } from 'node:fs';

export const MAGIC = 'DRFTEMB1';
const HEADER_BYTES = 16;

export function encodeEmbeddings(rows: Float32Array[]): Buffer {
  const count = rows.length;
  const dim = count > 0 ? rows[0].length : 0;
  if (count > 0 && dim === 0) throw new Error('embedding dim must be > 0');
  for (const row of rows) {
    if (row.length !== dim) throw new Error('ragged embedding rows');
  }
  const out = Buffer.alloc(HEADER_BYTES + count * dim * 4);
  out.write(MAGIC, 0, 'ascii');
  out.writeUInt32LE(count, 8);
  out.writeUInt32LE(dim, 12);
  for (let r = 0; r < count; r++) {
    for (let c = 0; c < dim; c++) {
      out.writeFloatLE(rows[r][c], HEADER_BYTES + 4 * (r * dim + c));
    }
  }
  return out;
}

export function writeEmbeddings(rows: Float32Array[], path: string): void {
  // write-then-rename keeps partially written files invisible
  const tmp = `${path}.tmp`;
  writeFileSync(tmp, encodeEmbeddings(rows));
  renameSync(tmp, path);
}

export interface EmbeddingMatrix {
  count: number;
  dim: number;
  values: Float32Array;
}

export function readEmbeddings(path: string): EmbeddingMatrix {
  const raw = readFileSync(path);
  const problems = inspect(raw, `${path}`);
  if (problems.length > 0) {
    throw new Error(problems.map(p => p.message).join('; '));
  }
  const count = raw.readUInt32LE(8);
  const dim = raw.readUInt32LE(12);
  const values = new Float32Array(count * dim);
  for (let i = 0; i < values.length; i++) {
    values[i] = raw.readFloatLE(HEADER_BYTES + 4 * i);
  }
  return { count, dim, values };
}

export interface FormatProblem {
  byteOffset: number;
  row?: number;
  message: string;
}

function inspect(raw: Buffer, label: string): FormatProblem[] {
  if (raw.length < HEADER_BYTES) {
    return [{ byteOffset: 0, message: `${label}: file shorter than header` }];
  }
  if (raw.toString('ascii', 0, 8) !== MAGIC) {
    return [{ byteOffset: 0, message: `${label}: bad magic` }];
  }
  const count = raw.readUInt32LE(8);
  const dim = raw.readUInt32LE(12);
  if (dim === 0) {
    return [{ byteOffset: 12, message: `${label}: zero embedding dimension` }];
  }
  const expected = HEADER_BYTES + count * dim * 4;
  if (raw.length !== expected) {
    return [{
      byteOffset: Math.min(raw.length, expected),
      message: `${label}: size mismatch (expected ${expected} bytes, ` +
               `got ${raw.length})`,
    }];
  }
  return [];
}

export interface VerifyReport {
  ok: boolean;
  count?: number;
  dim?: number;
  problems: FormatProblem[];
}

/** Validate magic, sizes, and the finiteness of every float. */
export function verifyFormat(path: string): VerifyReport {
  const raw = readFileSync(path);
  const problems = inspect(raw, path);
  if (problems.length > 0) return { ok: false, problems };

  const count = raw.readUInt32LE(8);
  const dim = raw.readUInt32LE(12);
  for (let i = 0; i < count * dim; i++) {
    const v = raw.readFloatLE(HEADER_BYTES + 4 * i);
    if (!Number.isFinite(v)) {
      problems.push({
        byteOffset: HEADER_BYTES + 4 * i,
        row: Math.floor(i / dim),
        message: `${path}: non-finite value ${v} at row ` +
                 `${Math.floor(i / dim)}, column ${i % dim}`,
      });
    }
  }
  return { ok: problems.length === 0, count, dim, problems };
}
