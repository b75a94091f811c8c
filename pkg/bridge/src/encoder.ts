/** Deterministic local encoders, resolved by identifier string.
 *
 * The engine is encoder-agnostic; it only consumes the embedding files.
 * "logmel-stats-v1" is a fixed log-mel frontend with mean/std pooling,
 * standing in for a heavyweight pretrained model.
 */

export interface Encoder {
  id: string;
  dim: number;
  pooling: string;
  encode(segment: Float64Array, sampleRateHz: number): Float32Array;
}

interface LogMelParams {
  nFft: number;
  hop: number;
  nMels: number;
}

function hertzToMel(f: number): number {
  return 2595 * Math.log10(1 + f / 700);
}

function melToHertz(m: number): number {
  return 700 * (10 ** (m / 2595) - 1);
}

function melFilterbank(p: LogMelParams, sampleRateHz: number): Float64Array[] {
  const nBins = p.nFft / 2 + 1;
  const maxMel = hertzToMel(sampleRateHz / 2);
  const edges: number[] = [];
  for (let i = 0; i < p.nMels + 2; i++) {
    edges.push(melToHertz((maxMel * i) / (p.nMels + 1)));
  }
  const filters: Float64Array[] = [];
  for (let m = 0; m < p.nMels; m++) {
    const filt = new Float64Array(nBins);
    const [lo, center, hi] = [edges[m], edges[m + 1], edges[m + 2]];
    for (let b = 1; b < nBins; b++) {
      const hz = (b * sampleRateHz) / 2 / (nBins - 1);
      const rising = (hz - lo) / (center - lo);
      const falling = (hi - hz) / (hi - center);
      filt[b] = Math.max(0, Math.min(rising, falling));
    }
    filters.push(filt);
  }
  return filters;
}

/** Power spectrum of one Hann-windowed frame via a direct DFT.
 * Frames are short (256 samples) and counts are small, so an FFT brings
 * nothing; a direct transform keeps the bridge dependency-free. */
function powerSpectrum(frame: Float64Array): Float64Array {
  const n = frame.length;
  const nBins = n / 2 + 1;
  const windowed = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    windowed[i] = frame[i] * (0.5 - 0.5 * Math.cos((2 * Math.PI * i) / n));
  }
  const power = new Float64Array(nBins);
  for (let k = 0; k < nBins; k++) {
    let re = 0;
    let im = 0;
    const w = (-2 * Math.PI * k) / n;
    for (let i = 0; i < n; i++) {
      re += windowed[i] * Math.cos(w * i);
      im += windowed[i] * Math.sin(w * i);
    }
    power[k] = re * re + im * im;
  }
  return power;
}

function logMelStats(p: LogMelParams): Encoder {
  return {
    id: `logmel-stats-v1`,
    dim: 2 * p.nMels,
    pooling: 'per-band mean and population std over frames',
    encode(segment: Float64Array, sampleRateHz: number): Float32Array {
      const filters = melFilterbank(p, sampleRateHz);
      const nFrames = 1 + Math.floor((segment.length - p.nFft) / p.hop);
      if (nFrames < 1) throw new Error('segment shorter than one frame');
      const bands: Float64Array[] = [];
      for (let f = 0; f < nFrames; f++) {
        const frame = segment.subarray(f * p.hop, f * p.hop + p.nFft);
        const power = powerSpectrum(frame);
        const mel = new Float64Array(p.nMels);
        for (let m = 0; m < p.nMels; m++) {
          let acc = 0;
          for (let b = 0; b < power.length; b++) acc += power[b] * filters[m][b];
          mel[m] = Math.log(Math.max(acc, 1e-10));
        }
        bands.push(mel);
      }
      const out = new Float32Array(2 * p.nMels);
      for (let m = 0; m < p.nMels; m++) {
        let mean = 0;
        for (const row of bands) mean += row[m];
        mean /= nFrames;
        let varAcc = 0;
        for (const row of bands) varAcc += (row[m] - mean) ** 2;
        out[m] = Math.fround(mean);
        out[p.nMels + m] = Math.fround(Math.sqrt(varAcc / nFrames));
      }
      return out;
    },
  };
}

const REGISTRY: Record<string, () => Encoder> = {
  'logmel-stats-v1': () => logMelStats({ nFft: 256, hop: 128, nMels: 32 }),
};

export function resolveEncoder(id: string): Encoder {
  const factory = REGISTRY[id];
  if (!factory) {
    throw new Error(
      `unknown encoder ${JSON.stringify(id)}; available: ` +
      Object.keys(REGISTRY).join(', '));
  }
  return factory();
}
