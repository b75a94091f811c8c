"""Confidence-weighted candidate scoring and the binary-counting baseline.

A candidate's prediction set is reduced to four components over its
per-keypoint probabilities p_i:

  * positive quality   mu_pos * r_pos  (mean of p_i > 0.5, times their share)
  * top-quartile mean  mu_top          (mean of the ceil(N/4) largest p_i)
  * sigmoid coverage   sig_cov         (mean of logistic(p_i), in [0.5, 0.7311])
  * exponential boost  e_exp           (mean of exp(4(p-0.5))/e^2 over p > 0.5)

The total is their weighted sum. Binary counting, which this replaces,
just counts positive logits and discards all confidence information.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .types import PredictionSet, ScoringWeights, logistic

_E2 = math.exp(2.0)  # exp(4 * (1.0 - 0.5)), the largest per-term boost


@dataclass(frozen=True)
class ScoreBreakdown:
    mu_pos: float
    r_pos: float
    mu_top: float
    sig_cov: float
    e_exp: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


def _probs(p) -> np.ndarray:
    probs = p.probs if isinstance(p, PredictionSet) else np.asarray(p, dtype=np.float64)
    if probs.size < 1:
        raise ValueError("need at least one prediction")
    return probs


def component_pos(p) -> tuple[float, float]:
    """(mean of positive probabilities, fraction positive); (0, 0) if none."""
    probs = _probs(p)
    pos = probs[probs > 0.5]
    if pos.size == 0:
        return 0.0, 0.0
    return float(pos.mean()), pos.size / probs.size


def component_top_quartile(p) -> float:
    """Mean of the k = max(1, ceil(N/4)) largest probabilities."""
    probs = _probs(p)
    k = max(1, math.ceil(probs.size / 4))
    top = np.sort(probs)[-k:]
    return float(top.mean())


def component_sigmoid_coverage(p) -> float:
    """Mean of logistic(p_i); probabilities in, so the range is [0.5, 0.7311]."""
    probs = _probs(p)
    return float(np.mean(logistic(probs)))


def component_exp(p) -> float:
    """Mean over all N of exp(4(p - 0.5)) / e^2 gated to p > 0.5.

    The e^2 normalizer is the p = 1 term, keeping the component in [0, 1].
    """
    probs = _probs(p)
    terms = np.where(probs > 0.5, np.exp(4.0 * (probs - 0.5)) / _E2, 0.0)
    return float(terms.mean())


def combine_components(pos_quality: float, mu_top: float, sig_cov: float,
                       e_exp: float, w: ScoringWeights = ScoringWeights()) -> float:
    """Weighted total from already-computed component values.

    ``pos_quality`` is the mu_pos * r_pos product.
    """
    return (w.w_pos * pos_quality + w.w_top * mu_top
            + w.w_sig * sig_cov + w.w_exp * e_exp)


def confidence_score(p, w: ScoringWeights = ScoringWeights()) -> ScoreBreakdown:
    """Full confidence-weighted score with its component breakdown."""
    mu_pos, r_pos = component_pos(p)
    mu_top = component_top_quartile(p)
    sig_cov = component_sigmoid_coverage(p)
    e_exp = component_exp(p)
    total = combine_components(mu_pos * r_pos, mu_top, sig_cov, e_exp, w)
    return ScoreBreakdown(mu_pos, r_pos, mu_top, sig_cov, e_exp, total)


def binary_count_score(logits) -> int:
    """Number of strictly positive logits (the baseline candidate score)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size < 1:
        raise ValueError("need at least one prediction")
    return int(np.sum(logits > 0.0))
