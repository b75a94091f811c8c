"""MSE evaluation, dataset aggregation, and the ablation harnesses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .align import (
    AlignConfig,
    ModelScorer,
    candidate_predictions,
    generate_candidates,
    predict_timestamps,
    score_from_predictions,
    pick_best,
)
from .features import FeatureConfig
from .io import DatasetManifest, read_keypoints, read_wav
from .neural import ModelConfig, TrainConfig, train
from .types import EvalReport, KeypointSet, ScoringWeights
from .util import parallel_map


def mse(pred_t1, true_t1) -> float:
    """Mean squared timestamp error in seconds squared."""
    pred = np.asarray(pred_t1, dtype=np.float64)
    true = np.asarray(true_t1, dtype=np.float64)
    if pred.shape != true.shape or pred.size < 1:
        raise ValueError(
            f"prediction/truth length mismatch: {pred.shape} vs {true.shape}"
        )
    return float(np.mean((true - pred) ** 2))


def dataset_score(per_file_mse: Mapping[str, float]) -> EvalReport:
    """Aggregate per-file MSEs into one dataset report."""
    if not per_file_mse:
        raise ValueError("need at least one file")
    return EvalReport(
        per_file_mse=dict(per_file_mse),
        dataset_mse=float(np.mean(list(per_file_mse.values()))),
    )


def combined_score(dataset_mses: Sequence[float]) -> float:
    """Arithmetic mean of exactly two dataset MSEs (the benchmark metric)."""
    if len(dataset_mses) != 2:
        raise ValueError(f"combined score needs exactly 2 datasets, "
                         f"got {len(dataset_mses)}")
    return float((dataset_mses[0] + dataset_mses[1]) / 2.0)


def combine(a: EvalReport, b: EvalReport) -> EvalReport:
    merged = {**a.per_file_mse, **b.per_file_mse}
    return EvalReport(
        per_file_mse=merged,
        dataset_mse=float(np.mean(list(merged.values()))),
        combined=combined_score([a.dataset_mse, b.dataset_mse]),
    )


# Weight configurations exercised by the weight-ablation harness, in the
# order they are reported.
WEIGHT_ABLATION_CONFIGS: tuple[tuple[str, ScoringWeights], ...] = (
    ("proposed", ScoringWeights(0.4, 0.3, 0.2, 0.1)),
    ("mean_top", ScoringWeights(0.5, 0.5, 0.0, 0.0)),
    ("mean_only", ScoringWeights(1.0, 0.0, 0.0, 0.0)),
    ("equal", ScoringWeights(0.25, 0.25, 0.25, 0.25)),
    ("sigmoid_exp", ScoringWeights(0.0, 0.0, 0.5, 0.5)),
    ("top_only", ScoringWeights(0.0, 1.0, 0.0, 0.0)),
)


@dataclass(frozen=True)
class AblationRow:
    name: str
    detail: str
    per_file_mse: dict
    dataset_mse: float


def _load_eval_pairs(manifest: DatasetManifest, split: str):
    entries = manifest.split(split)
    if not entries:
        raise ValueError(f"manifest has no {split!r} entries")
    pairs = []
    for e in entries:
        channels = read_wav(e.wav_path)
        if len(channels) != 2:
            raise ValueError(f"{e.wav_path}: expected stereo")
        keypoints = read_keypoints(e.keypoints_path)
        if keypoints.t1 is None:
            raise ValueError(f"{e.keypoints_path}: evaluation needs ground-truth t1")
        pairs.append((e.pair_id, channels[0], channels[1], keypoints))
    return pairs


def ablate_weights(manifest: DatasetManifest, scorer: ModelScorer,
                   align_cfg: AlignConfig,
                   weight_configs=WEIGHT_ABLATION_CONFIGS,
                   split: str = "val") -> list[AblationRow]:
    """MSE per weight configuration over the manifest's evaluation pairs.

    The model's prediction sets are computed once per candidate and
    re-scored under every configuration, so the comparison isolates the
    scoring function exactly.
    """
    pairs = _load_eval_pairs(manifest, split)
    for name, w in weight_configs:
        ScoringWeights(*w.as_tuple())  # reject degenerate configs up front

    per_config: dict[str, dict[str, float]] = {name: {} for name, _ in weight_configs}

    def one_pair(item):
        pair_id, ch0, ch1, keypoints = item
        candidates = generate_candidates(ch0.duration_seconds, align_cfg)
        preds = candidate_predictions((ch0, ch1), keypoints.t0, candidates,
                                      scorer, scorer.feature_cfg)
        out = {}
        for name, w in weight_configs:
            scores = [score_from_predictions(p, "confidence", w) for p in preds]
            best_i, _ = pick_best(candidates, scores)
            pred_t1 = predict_timestamps(candidates[best_i], len(keypoints))
            out[name] = mse(pred_t1, keypoints.t1)
        return pair_id, out

    for pair_id, out in parallel_map(one_pair, pairs):
        for name, value in out.items():
            per_config[name][pair_id] = value

    return [
        AblationRow(
            name=name,
            detail=",".join(f"{v:g}" for v in w.as_tuple()),
            per_file_mse=per_config[name],
            dataset_mse=float(np.mean(list(per_config[name].values()))),
        )
        for name, w in weight_configs
    ]


# Progressive architecture/scoring stages reported by the component
# ablation, from the plainest baseline to the full system.
COMPONENT_STAGES = (
    ("baseline_mlp", dict(use_attention=False, mlp_kind="plain"), "binary"),
    ("enhanced_mlp", dict(use_attention=False, mlp_kind="enhanced"), "binary"),
    ("cross_attention", dict(use_attention=True, mlp_kind="enhanced"), "binary"),
    ("confidence_scoring", dict(use_attention=True, mlp_kind="enhanced"), "confidence"),
)


def ablate_components(manifest: DatasetManifest, model_cfg: ModelConfig,
                      train_cfg: TrainConfig, align_cfg: AlignConfig,
                      feature_cfg: FeatureConfig = FeatureConfig(),
                      weights: ScoringWeights = ScoringWeights(),
                      split: str = "val") -> list[AblationRow]:
    """Train one model per architecture toggle and report the progression.

    The last two stages share a single trained model; binary counting and
    confidence scoring rank the same prediction sets.
    """
    pairs = _load_eval_pairs(manifest, split)
    trained: dict[tuple, ModelScorer] = {}
    rows = []
    for name, toggles, score_mode in COMPONENT_STAGES:
        key = (toggles["use_attention"], toggles["mlp_kind"])
        if key not in trained:
            cfg = ModelConfig(
                embed_dim=model_cfg.embed_dim,
                n_heads=model_cfg.n_heads,
                head_dims=model_cfg.head_dims,
                input_dim=model_cfg.input_dim,
                seed=model_cfg.seed,
                **toggles,
            )
            params, _ = train(manifest, cfg, train_cfg, feature_cfg)
            trained[key] = ModelScorer(params, cfg, feature_cfg)
        scorer = trained[key]

        def one_pair(item):
            pair_id, ch0, ch1, keypoints = item
            candidates = generate_candidates(ch0.duration_seconds, align_cfg)
            preds = candidate_predictions((ch0, ch1), keypoints.t0, candidates,
                                          scorer, feature_cfg)
            scores = [score_from_predictions(p, score_mode, weights)
                      for p in preds]
            best_i, _ = pick_best(candidates, scores)
            pred_t1 = predict_timestamps(candidates[best_i], len(keypoints))
            return pair_id, mse(pred_t1, keypoints.t1)

        per_file = dict(parallel_map(one_pair, pairs))
        rows.append(AblationRow(
            name=name,
            detail=f"attention={'on' if key[0] else 'off'},"
                   f"mlp={key[1]},scoring={score_mode}",
            per_file_mse=per_file,
            dataset_mse=float(np.mean(list(per_file.values()))),
        ))
    return rows


def evaluate_predictions(pred: KeypointSet, truth: KeypointSet) -> float:
    """MSE between a prediction CSV and a ground-truth CSV."""
    if pred.t1 is None or truth.t1 is None:
        raise ValueError("both files must carry t1 values")
    if len(pred) != len(truth) or not np.array_equal(pred.index, truth.index):
        raise ValueError("prediction and truth keypoint indices differ")
    return mse(pred.t1, truth.t1)


def ablation_csv(rows: list[AblationRow]) -> str:
    lines = ["config,detail,dataset_mse"]
    for r in rows:
        lines.append(f"{r.name},\"{r.detail}\",{r.dataset_mse:.9f}")
    return "\n".join(lines) + "\n"
