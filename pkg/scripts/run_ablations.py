"""Weight and component ablation study on synthetic data.

Trains the architecture variants, then writes two CSV tables: one sweeping
the confidence-score weight configurations, one adding components
progressively (plain MLP -> enhanced MLP -> cross-attention -> confidence
scoring).

Usage:
    python scripts/run_ablations.py --workdir /tmp/ablations
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from driftalign.align import AlignConfig, ModelScorer
from driftalign.evaluate import ablate_components, ablate_weights, ablation_csv
from driftalign.features import FeatureConfig
from driftalign.neural import ModelConfig, TrainConfig, train
from synthetic_benchmark import build_dataset


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="/tmp/driftalign_ablations")
    ap.add_argument("--duration", type=float, default=48.0)
    ap.add_argument("--n-keypoints", type=int, default=40)
    ap.add_argument("--max-epochs", type=int, default=60)
    ap.add_argument("--grid", default="11x101")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    workdir = Path(args.workdir)
    feature_cfg = FeatureConfig(n_mels=24, n_fft=256, hop=256)
    model_cfg = ModelConfig(embed_dim=32, n_heads=4, head_dims=(32, 16, 8),
                            input_dim=feature_cfg.pooled_dim, seed=args.seed)
    train_cfg = TrainConfig(max_epochs=args.max_epochs, keypoint_stride=2,
                            seed=args.seed)
    ga, _, gb = args.grid.partition("x")
    align_cfg = AlignConfig(sampling="grid", grid_alpha=int(ga),
                            grid_beta=int(gb))

    print("building dataset ...")
    manifest = build_dataset(workdir / "data", 8, 3, args.duration,
                             args.n_keypoints, 8000, 40.0, args.seed + 7)

    print("training full model for the weight sweep ...")
    params, _ = train(manifest, model_cfg, train_cfg, feature_cfg)
    scorer = ModelScorer(params, model_cfg, feature_cfg)
    weight_rows = ablate_weights(manifest, scorer, align_cfg)
    (workdir / "weight_ablation.csv").write_text(ablation_csv(weight_rows))
    print(ablation_csv(weight_rows))

    print("training per-architecture models for the component sweep ...")
    component_rows = ablate_components(manifest, model_cfg, train_cfg,
                                       align_cfg, feature_cfg)
    (workdir / "component_ablation.csv").write_text(
        ablation_csv(component_rows))
    print(ablation_csv(component_rows))
    print(f"tables written under {workdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
