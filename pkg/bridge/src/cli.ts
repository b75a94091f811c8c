#!/usr/bin/env node
/** Bridge CLI: `export --job job.json` writes embedding files for every
 * manifest pair; `verify --file x.emb` validates one file. */

import { mkdirSync } from 'node:fs';

import { verifyFormat } from './embedfile.js';
import { exportEmbeddings, loadJob } from './export.js';

function usage(): void {
  console.error('usage: drift-embed-bridge export --job JOB.json');
  console.error('       drift-embed-bridge verify --file FILE.emb');
}

export function main(argv: string[]): number {
  const [command, flag, value] = argv;
  if (command === 'export' && flag === '--job' && value) {
    try {
      const job = loadJob(value);
      mkdirSync(job.outDir, { recursive: true });
      const results = exportEmbeddings(job);
      for (const r of results) {
        console.log(`${r.pairId}: ${r.count} x ${r.dim} -> ${r.files.join(', ')}`);
      }
      return 0;
    } catch (err) {
      console.error(`export failed: ${(err as Error).message}`);
      return 1;
    }
  }
  if (command === 'verify' && flag === '--file' && value) {
    try {
      const report = verifyFormat(value);
      if (report.ok) {
        console.log(`ok: ${report.count} x ${report.dim}`);
        return 0;
      }
      for (const p of report.problems) {
        console.error(`byte ${p.byteOffset}` +
                      (p.row !== undefined ? ` (row ${p.row})` : '') +
                      `: ${p.message}`);
      }
      return 1;
    } catch (err) {
      console.error(`verify failed: ${(err as Error).message}`);
      return 1;
    }
  }
  usage();
  return 2;
}

const entry = process.argv[1] ?? '';
if (entry.endsWith('cli.js') || entry.endsWith('cli.ts')) {
  process.exit(main(process.argv.slice(2)));
}
