/** Minimal RIFF/WAVE reader: PCM16 and IEEE float32, 1-2 channels. */

import { readFileSync } from 'node:fs';

export interface WavAudio {
  sampleRateHz: number;
  channels: Float64Array[];
}

const WAVE_PCM = 0x0001;
const WAVE_IEEE_FLOAT = 0x0003;

export function readWav(path: string): WavAudio {
  const raw = readFileSync(path);
  if (raw.length < 12 || raw.toString('ascii', 0, 4) !== 'RIFF' ||
      raw.toString('ascii', 8, 12) !== 'WAVE') {
    throw new Error(`${path}: not a RIFF/WAVE file`);
  }

  let fmt: { format: number; channels: number; rate: number; bits: number } | null = null;
  let data: Buffer | null = null;
  let pos = 12;
  while (pos + 8 <= raw.length) {
    const id = raw.toString('ascii', pos, pos + 4);
    const size = raw.readUInt32LE(pos + 4);
    const body = raw.subarray(pos + 8, pos + 8 + size);
    if (id === 'fmt ') {
      if (size < 16) throw new Error(`${path}: fmt chunk truncated`);
      fmt = {
        format: body.readUInt16LE(0),
        channels: body.readUInt16LE(2),
        rate: body.readUInt32LE(4),
        bits: body.readUInt16LE(14),
      };
    } else if (id === 'data') {
      if (body.length < size) {
        throw new Error(`${path}: truncated data chunk`);
      }
      data = body;
    }
    pos += 8 + size + (size & 1);
  }
  if (!fmt || !data) throw new Error(`${path}: missing fmt or data chunk`);
  if (fmt.rate === 0) throw new Error(`${path}: zero sample rate`);
  if (fmt.channels < 1 || fmt.channels > 2) {
    throw new Error(`${path}: unsupported channel count ${fmt.channels}`);
  }

  let interleaved: Float64Array;
  if (fmt.format === WAVE_PCM && fmt.bits === 16) {
    const n = Math.floor(data.length / 2);
    interleaved = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      interleaved[i] = data.readInt16LE(2 * i) / 32768;
    }
  } else if (fmt.format === WAVE_IEEE_FLOAT && fmt.bits === 32) {
    const n = Math.floor(data.length / 4);
    interleaved = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      interleaved[i] = data.readFloatLE(4 * i);
    }
  } else {
    throw new Error(
      `${path}: unsupported encoding (format ${fmt.format}, ${fmt.bits}-bit)`);
  }

  const frames = Math.floor(interleaved.length / fmt.channels);
  const channels: Float64Array[] = [];
  for (let c = 0; c < fmt.channels; c++) {
    const ch = new Float64Array(frames);
    for (let i = 0; i < frames; i++) ch[i] = interleaved[i * fmt.channels + c];
    channels.push(ch);
  }
  return { sampleRateHz: fmt.rate, channels };
}
