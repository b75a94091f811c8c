"""Candidate generation, candidate scoring, and argmax selection.

The search space is the affine box alpha in [1 +- delta_max / T_dur],
beta in [-delta_max, delta_max]. Ties are broken deterministically toward
the smallest drift: smaller |beta|, then smaller |alpha - 1|, then
generation order. The identity candidate (1, 0) is always in the list so
selection can never do worse than no synchronization in coverage terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .features import FeatureConfig, PooledExtractor, pooled_features_at
from .neural import ModelConfig, ModelParams, forward_pooled
from .scoring import binary_count_score, confidence_score
from .types import (
    DELTA_MAX_DEFAULT,
    AffineCandidate,
    AlignmentResult,
    AudioBuffer,
    KeypointSet,
    PredictionSet,
    ScoringWeights,
)
from .util import parallel_map

SCORER_KINDS = ("confidence", "binary", "crosscorr", "nosync")


@dataclass(frozen=True)
class AlignConfig:
    delta_max: float = DELTA_MAX_DEFAULT
    n_candidates: int = 100
    sampling: str = "random"  # "random" | "grid"
    grid_alpha: int = 21
    grid_beta: int = 201
    seed: int = 0
    scorer: str = "confidence"
    crosscorr_mode: str = "phat"  # "phat" | "plain"

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if self.sampling not in ("random", "grid"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if min(self.grid_alpha, self.grid_beta) < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.scorer not in SCORER_KINDS:
            raise ValueError(f"unknown scorer {self.scorer!r}")


def generate_candidates(t_dur: float, cfg: AlignConfig) -> list[AffineCandidate]:
    """Sample the affine box; the identity candidate is always appended."""
    if t_dur <= 0:
        raise ValueError("t_dur must be positive")
    half = cfg.delta_max / t_dur
    if cfg.sampling == "random":
        rng = np.random.default_rng(cfg.seed)
        alphas = rng.uniform(1.0 - half, 1.0 + half, cfg.n_candidates)
        betas = rng.uniform(-cfg.delta_max, cfg.delta_max, cfg.n_candidates)
        cands = [AffineCandidate(float(a), float(b))
                 for a, b in zip(alphas, betas)]
    else:
        # a single grid point degenerates to the box center, not an endpoint
        alphas = (np.linspace(1.0 - half, 1.0 + half, cfg.grid_alpha)
                  if cfg.grid_alpha > 1 else np.array([1.0]))
        betas = (np.linspace(-cfg.delta_max, cfg.delta_max, cfg.grid_beta)
                 if cfg.grid_beta > 1 else np.array([0.0]))
        cands = [AffineCandidate(float(a), float(b))
                 for a in alphas for b in betas]
    cands.append(AffineCandidate(1.0, 0.0))
    return cands


def predict_timestamps(c: AffineCandidate, n: int) -> np.ndarray:
    """Predicted channel-1 timestamps alpha * i + beta on the keypoint grid."""
    if n < 1:
        raise ValueError("need at least one keypoint")
    return c.alpha * np.arange(n, dtype=np.float64) + c.beta


class ModelScorer:
    """Scores segment pairs with a trained model; immutable, thread-safe."""

    def __init__(self, params: ModelParams, model_cfg: ModelConfig,
                 feature_cfg: FeatureConfig = FeatureConfig()):
        self.params = params
        self.model_cfg = model_cfg
        self.feature_cfg = feature_cfg

    def evaluate(self, seg0, seg1) -> tuple[float, float]:
        from .neural import forward

        return forward(seg0, seg1, self.params, self.model_cfg, self.feature_cfg)

    def evaluate_pooled(self, x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
        y, _ = forward_pooled(x0, x1, self.params, self.model_cfg)
        return y


def score_from_predictions(preds: PredictionSet, mode: str,
                           weights: ScoringWeights) -> float:
    if mode == "binary":
        return float(binary_count_score(preds.logits))
    return confidence_score(preds, weights).total


def score_candidate(pair, keypoints_t0, c: AffineCandidate,
                    scorer: ModelScorer, weights: ScoringWeights,
                    feature_cfg: FeatureConfig,
                    mode: str = "confidence",
                    x0_pooled: Optional[np.ndarray] = None,
                    ) -> tuple[float, PredictionSet]:
    """Score one candidate: extract segments at predicted spots, run the
    scorer per keypoint, and aggregate.

    ``x0_pooled`` lets callers reuse the candidate-independent channel-0
    features across the whole candidate set.
    """
    ch0, ch1 = pair
    t0 = np.asarray(keypoints_t0, dtype=np.float64)
    n = len(t0)
    if x0_pooled is None:
        x0_pooled = pooled_features_at(ch0, t0, feature_cfg, channel=0)
    t_hat = predict_timestamps(c, n)
    x1 = pooled_features_at(ch1, t_hat, feature_cfg, channel=1)
    logits = scorer.evaluate_pooled(x0_pooled, x1)
    preds = PredictionSet.from_logits(logits, c)
    return score_from_predictions(preds, mode, weights), preds


def candidate_predictions(pair, keypoints_t0, candidates,
                          scorer: ModelScorer,
                          feature_cfg: FeatureConfig) -> list[PredictionSet]:
    """One PredictionSet per candidate, channel-0 features shared.

    Downstream scorers (confidence with any weights, binary counting) can
    then rank the same predictions without re-running the model.
    """
    ch0, ch1 = pair
    t0 = np.asarray(keypoints_t0, dtype=np.float64)
    n = len(t0)
    x0_pooled = pooled_features_at(ch0, t0, feature_cfg, channel=0)
    extract1 = PooledExtractor(ch1, feature_cfg)

    # For dense searches, precomputing every channel-1 frame once is far
    # cheaper than per-candidate FFTs; skip it when the table would be
    # large relative to the work it saves.
    if len(candidates) * n >= 20_000:
        t_lo = min(min(c.beta, c.alpha * (n - 1) + c.beta) for c in candidates)
        t_hi = max(max(c.beta, c.alpha * (n - 1) + c.beta) for c in candidates)
        rows = (t_hi - t_lo) * ch1.sample_rate_hz + extract1.length
        if rows * feature_cfg.n_mels * 8 <= 1 << 29:  # cap the table at 512 MB
            extract1.densify(t_lo, t_hi)

    def one(c: AffineCandidate) -> PredictionSet:
        x1 = extract1(predict_timestamps(c, n))
        return PredictionSet.from_logits(scorer.evaluate_pooled(x0_pooled, x1), c)

    return parallel_map(one, candidates)


def crosscorr_curve(ch0: AudioBuffer, ch1: AudioBuffer, max_lag_s: float,
                    mode: str = "phat") -> tuple[np.ndarray, int]:
    """Cross-correlation of the two channels over lags within +-max_lag_s.

    Returns (curve, center) where curve[center + k] is the correlation at a
    lag of k samples (channel 1 relative to channel 0). PHAT normalizes the
    cross-spectrum to unit magnitude with a 1e-12 floor.
    """
    if not np.any(ch0.samples) or not np.any(ch1.samples):
        raise ValueError("cross-correlation of an all-zero channel is degenerate")
    if ch0.sample_rate_hz != ch1.sample_rate_hz:
        raise ValueError("sample rates differ")
    fs = ch0.sample_rate_hz
    n = len(ch0) + len(ch1)
    spec0 = np.fft.rfft(ch0.samples, n)
    spec1 = np.fft.rfft(ch1.samples, n)
    cross = spec1 * np.conj(spec0)
    if mode == "phat":
        cross = cross / np.maximum(np.abs(cross), 1e-12)
    cc = np.fft.irfft(cross, n)
    max_shift = min(int(max_lag_s * fs), n // 2)
    curve = np.concatenate((cc[-max_shift:], cc[:max_shift + 1]))
    return curve, max_shift


def crosscorr_delay(pair, max_lag_s: float, mode: str = "phat") -> float:
    """Single best delay estimate in seconds (positive = channel 1 lags)."""
    ch0, ch1 = pair
    curve, center = crosscorr_curve(ch0, ch1, max_lag_s, mode)
    return float((int(np.argmax(curve)) - center) / ch0.sample_rate_hz)


def pick_best(candidates, scores) -> tuple[int, float]:
    """Argmax with deterministic tie-breaking on bit-equal scores."""
    best_i = 0
    best_score = scores[0]
    for i in range(1, len(candidates)):
        s = scores[i]
        if s > best_score:
            best_i, best_score = i, s
        elif s == best_score:
            cur, inc = candidates[best_i], candidates[i]
            if (abs(inc.beta), abs(inc.alpha - 1.0)) < (abs(cur.beta),
                                                        abs(cur.alpha - 1.0)):
                best_i = i
    return best_i, float(best_score)


def align(pair, keypoints: KeypointSet, cfg: AlignConfig,
          model: Optional[ModelScorer] = None,
          weights: ScoringWeights = ScoringWeights(),
          feature_cfg: FeatureConfig = FeatureConfig(),
          keep_scores: bool = False) -> AlignmentResult:
    """Run the full inference pipeline on one stereo pair.

    Generates candidates, scores each with the configured backend, and
    returns the argmax candidate with its predicted timestamps.
    """
    ch0, ch1 = pair
    if not keypoints.canonical_grid:
        raise ValueError("alignment requires canonical-grid keypoints")
    n = len(keypoints)
    t0 = keypoints.t0
    candidates = generate_candidates(ch0.duration_seconds, cfg)

    if cfg.scorer == "nosync":
        scores = [0.0] * len(candidates)
    elif cfg.scorer == "crosscorr":
        curve, center = crosscorr_curve(ch0, ch1, cfg.delta_max,
                                        cfg.crosscorr_mode)
        fs = ch0.sample_rate_hz

        def cc_score(c: AffineCandidate) -> float:
            k = int(round(c.beta * fs))
            k = max(-center, min(center, k))
            return float(curve[center + k])

        scores = [cc_score(c) for c in candidates]
    else:
        if model is None:
            raise ValueError(f"scorer {cfg.scorer!r} needs a trained model")
        preds = candidate_predictions((ch0, ch1), t0, candidates, model,
                                      feature_cfg)
        scores = [score_from_predictions(p, cfg.scorer, weights)
                  for p in preds]

    best_i, best_score = pick_best(candidates, scores)
    chosen = candidates[best_i]
    return AlignmentResult(
        chosen=chosen,
        predicted_t1=predict_timestamps(chosen, n),
        score=best_score,
        per_candidate_scores=tuple(zip(candidates, scores)) if keep_scores else None,
    )
