"""End-to-end synthetic benchmark.

Simulates a drifted dataset, trains the toy scorer, and reports held-out
MSE for every scoring backend (nosync, crosscorr, binary, confidence) in a
challenge-style table.

Usage:
    python scripts/synthetic_benchmark.py --workdir /tmp/bench --seeds 5
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from driftalign import io as io_mod
from driftalign.align import AlignConfig, ModelScorer, align
from driftalign.evaluate import mse
from driftalign.features import FeatureConfig
from driftalign.neural import ModelConfig, TrainConfig, save_model, train
from driftalign.sim import SynthSpec, make_drift, synth_pair


def feasible_affine(rng, duration, delta_max=5.0):
    beta = rng.uniform(-3.0, 3.0)
    margin = (delta_max - abs(beta)) / duration
    alpha = 1.0 + rng.uniform(-0.9 * margin, 0.9 * margin)
    return make_drift("affine", (alpha, beta), delta_max=delta_max,
                      duration_s=duration)


def build_dataset(out: Path, n_train, n_val, duration, n_keypoints, fs,
                  snr_db, seed):
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for j in range(n_train + n_val):
        drift = feasible_affine(rng, duration)
        spec = SynthSpec(duration, fs, n_keypoints, "chirp", snr_db,
                         seed=int(rng.integers(2**63)))
        ch0, ch1, truth = synth_pair(spec, drift)
        pid = f"pair_{j:03d}"
        io_mod.write_wav([ch0, ch1], fs, out / f"{pid}.wav")
        io_mod.write_keypoints(truth, out / f"{pid}.csv")
        entries.append(io_mod.ManifestEntry(
            pid, out / f"{pid}.wav", out / f"{pid}.csv",
            "train" if j < n_train else "val"))
    manifest = io_mod.DatasetManifest("bench", tuple(entries))
    io_mod.write_manifest(manifest, out / "manifest.json")
    return manifest


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="/tmp/driftalign_bench")
    ap.add_argument("--seeds", type=int, default=5,
                    help="held-out pairs to evaluate")
    ap.add_argument("--duration", type=float, default=68.0)
    ap.add_argument("--n-keypoints", type=int, default=60)
    ap.add_argument("--sample-rate", type=int, default=8000)
    ap.add_argument("--snr-db", type=float, default=40.0)
    ap.add_argument("--grid", default="21x201")
    ap.add_argument("--max-epochs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    workdir = Path(args.workdir)
    fs = args.sample_rate
    feature_cfg = FeatureConfig(n_mels=24, n_fft=256, hop=256)
    model_cfg = ModelConfig(embed_dim=32, n_heads=4, head_dims=(32, 16, 8),
                            input_dim=feature_cfg.pooled_dim, seed=args.seed)
    train_cfg = TrainConfig(max_epochs=args.max_epochs, keypoint_stride=2,
                            seed=args.seed)

    print("building dataset ...")
    manifest = build_dataset(workdir / "data", 10, 2, args.duration,
                             args.n_keypoints, fs, args.snr_db, args.seed + 7)

    print("training scorer ...")
    t0 = time.time()
    params, log = train(manifest, model_cfg, train_cfg, feature_cfg)
    save_model(params, model_cfg, workdir / "model.bin")
    print(f"  {len(log)} epochs in {time.time() - t0:.0f}s, "
          f"best val loss {min(r.val_loss for r in log):.4f}")

    ga, _, gb = args.grid.partition("x")
    scorer = ModelScorer(params, model_cfg, feature_cfg)
    backends = ("nosync", "crosscorr", "binary", "confidence")
    totals = {b: [] for b in backends}

    rng = np.random.default_rng(args.seed + 991)
    for trial in range(args.seeds):
        drift = feasible_affine(rng, args.duration)
        spec = SynthSpec(args.duration, fs, args.n_keypoints, "chirp",
                         args.snr_db, seed=int(rng.integers(2**63)))
        ch0, ch1, truth = synth_pair(spec, drift)
        for backend in backends:
            cfg = AlignConfig(sampling="grid", grid_alpha=int(ga),
                              grid_beta=int(gb), scorer=backend)
            result = align((ch0, ch1), truth, cfg,
                           model=scorer if backend in ("binary", "confidence")
                           else None,
                           feature_cfg=feature_cfg)
            totals[backend].append(mse(result.predicted_t1, truth.t1))
        print(f"  pair {trial}: " + "  ".join(
            f"{b}={totals[b][-1]:.4f}" for b in backends))

    print(f"\n{'method':<12} {'mean MSE (s^2)':>15}")
    for backend in backends:
        print(f"{backend:<12} {np.mean(totals[backend]):>15.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
