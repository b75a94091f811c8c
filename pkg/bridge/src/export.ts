/** Batch embedding export driven by a JSON job file. */

import { readFileSync, writeFileSync } from 'node:fs';
import { dirname, join, resolve } from 'node:path';

import { resolveEncoder } from './encoder.js';
import { writeEmbeddings } from './embedfile.js';
import { readWav } from './wav.js';

export interface ExportJob {
  manifest: string;
  encoder: string;
  segmentS: number;
  outDir: string;
  pairs?: string[];
}

interface ManifestEntry {
  pairId: string;
  wavPath: string;
  keypointsPath: string;
}

export function loadJob(path: string): ExportJob {
  const doc = JSON.parse(readFileSync(path, 'utf-8'));
  const base = dirname(resolve(path));
  if (typeof doc.manifest !== 'string' || typeof doc.encoder !== 'string' ||
      typeof doc.out_dir !== 'string') {
    throw new Error(`${path}: job needs manifest, encoder, out_dir`);
  }
  return {
    manifest: resolve(base, doc.manifest),
    encoder: doc.encoder,
    segmentS: typeof doc.segment_s === 'number' ? doc.segment_s : 2.0,
    outDir: resolve(base, doc.out_dir),
    pairs: Array.isArray(doc.pairs) ? doc.pairs : undefined,
  };
}

function loadManifest(path: string): ManifestEntry[] {
  const doc = JSON.parse(readFileSync(path, 'utf-8'));
  const base = dirname(resolve(path));
  return doc.entries.map((e: Record<string, string>) => ({
    pairId: e.pair_id,
    wavPath: resolve(base, e.wav_path),
    keypointsPath: resolve(base, e.keypoints_path),
  }));
}

interface Keypoints {
  t0: number[];
  t1: (number | null)[];
}

function loadKeypoints(path: string): Keypoints {
  const lines = readFileSync(path, 'utf-8').split(/\r?\n/).filter(l => l.trim());
  if (lines[0]?.trim() !== 'index,t0,t1') {
    throw new Error(`${path}: expected header index,t0,t1`);
  }
  const t0: number[] = [];
  const t1: (number | null)[] = [];
  for (const line of lines.slice(1)) {
    const [, rawT0, rawT1] = line.split(',');
    t0.push(Number(rawT0));
    t1.push(rawT1 && rawT1.trim() ? Number(rawT1) : null);
  }
  return { t0, t1 };
}

/** Window [floor(t * fs), floor(t * fs) + floor(tau * fs)), zero padded. */
export function extractSegment(samples: Float64Array, sampleRateHz: number,
                               t: number, segmentS: number): Float64Array {
  const length = Math.floor(segmentS * sampleRateHz);
  const start = Math.floor(t * sampleRateHz);
  const out = new Float64Array(length);
  const lo = Math.max(start, 0);
  const hi = Math.min(start + length, samples.length);
  for (let i = lo; i < hi; i++) out[i - start] = samples[i];
  return out;
}

export interface ExportResult {
  pairId: string;
  files: string[];
  count: number;
  dim: number;
}

export function exportEmbeddings(job: ExportJob): ExportResult[] {
  const encoder = resolveEncoder(job.encoder);
  const entries = loadManifest(job.manifest).filter(
    e => !job.pairs || job.pairs.includes(e.pairId));
  if (entries.length === 0) throw new Error('no manifest entries selected');

  const results: ExportResult[] = [];
  for (const entry of entries) {
    const audio = readWav(entry.wavPath);
    if (audio.channels.length !== 2) {
      throw new Error(`${entry.wavPath}: expected a stereo pair`);
    }
    const keypoints = loadKeypoints(entry.keypointsPath);
    const perChannel: number[][] = [
      keypoints.t0,
      keypoints.t1.map((v, i) => v ?? keypoints.t0[i]),
    ];

    const files: string[] = [];
    for (const channel of [0, 1] as const) {
      const rows = perChannel[channel].map(t => encoder.encode(
        extractSegment(audio.channels[channel], audio.sampleRateHz, t,
                       job.segmentS),
        audio.sampleRateHz));
      const outPath = join(job.outDir, `${entry.pairId}.ch${channel}.emb`);
      writeEmbeddings(rows, outPath);
      files.push(outPath);
    }
    const sidecar = {
      pair_id: entry.pairId,
      encoder: encoder.id,
      dim: encoder.dim,
      segment_s: job.segmentS,
      pooling: encoder.pooling,
      rows_per_channel: keypoints.t0.length,
    };
    writeFileSync(join(job.outDir, `${entry.pairId}.job.json`),
                  JSON.stringify(sidecar, null, 2) + '\n');
    results.push({
      pairId: entry.pairId,
      files,
      count: keypoints.t0.length,
      dim: encoder.dim,
    });
  }
  return results;
}
