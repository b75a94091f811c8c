"""Shared domain types for drift alignment.

Everything here is an immutable value object plus validation; computation
lives in the other modules. Timestamps are 64-bit floating seconds
throughout, conversion to sample indices happens only at segment
extraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

DELTA_MAX_DEFAULT = 5.0  # seconds, the drift bound |D(t) - t| <= delta_max


class DriftAlignError(Exception):
    """Base class for errors raised by this package."""


class ConstraintViolation(DriftAlignError, ValueError):
    """A keypoint or drift trace exceeds the allowed drift bound."""


class GridViolation(DriftAlignError, ValueError):
    """Keypoints flagged canonical-grid do not sit on the 1-second grid."""


class FormatError(DriftAlignError, ValueError):
    """A file does not conform to its declared format."""


def logistic(y):
    """Numerically stable standard logistic 1 / (1 + exp(-y))."""
    y = np.asarray(y, dtype=np.float64)
    out = np.empty_like(y)
    pos = y >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-y[pos]))
    ey = np.exp(y[~pos])
    out[~pos] = ey / (1.0 + ey)
    return out if out.ndim else float(out)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class AudioBuffer:
    """Sampled mono waveform. Amplitudes are nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        object.__setattr__(self, "samples", _readonly(self.samples))
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class KeypointSet:
    """Paired channel timestamps.

    ``t0`` are the channel-0 reference timestamps; ``t1`` is either the
    annotated channel-1 timestamps (training) or None (inference).
    ``canonical_grid`` is set explicitly when t0 sits exactly on the
    1-second integer grid; non-grid sets never pass silently.
    """

    index: np.ndarray
    t0: np.ndarray
    t1: Optional[np.ndarray] = None
    canonical_grid: bool = False

    def __post_init__(self):
        idx = np.asarray(self.index, dtype=np.int64)
        idx.flags.writeable = False
        object.__setattr__(self, "index", idx)
        object.__setattr__(self, "t0", _readonly(self.t0))
        if self.t1 is not None:
            object.__setattr__(self, "t1", _readonly(self.t1))
            if len(self.t1) != len(self.t0):
                raise ValueError("t0 and t1 lengths differ")
        if len(self.index) != len(self.t0):
            raise ValueError("index and t0 lengths differ")
        if np.any(self.index < 0):
            raise ValueError("keypoint indices must be non-negative")

    def __len__(self) -> int:
        return len(self.t0)

    @property
    def has_t1(self) -> bool:
        return self.t1 is not None


def validate_keypoints(k: KeypointSet, delta_max: float = DELTA_MAX_DEFAULT) -> KeypointSet:
    """Check KeypointSet invariants, returning the set unchanged when valid.

    Raises ConstraintViolation naming the first offending index when a
    |t1 - t0| bound is exceeded, GridViolation when a canonical-grid set
    leaves the integer grid, and ValueError for non-monotonic t0.
    """
    if len(k) == 0:
        raise ValueError("keypoint set is empty")
    if np.any(np.diff(k.t0) <= 0):
        bad = int(np.argmax(np.diff(k.t0) <= 0)) + 1
        raise ValueError(f"t0 not strictly increasing at position {bad}")
    if k.canonical_grid:
        on_grid = (k.index == np.arange(len(k))) & (k.t0 == k.index.astype(np.float64))
        if not np.all(on_grid):
            bad = int(np.argmin(on_grid))
            raise GridViolation(
                f"t0 grid violated at position {bad}: expected t0={bad}, got {k.t0[bad]}"
            )
    if k.t1 is not None:
        drift = np.abs(k.t1 - k.t0)
        if np.any(drift > delta_max):
            bad = int(np.argmax(drift > delta_max))
            raise ConstraintViolation(
                f"constraint violation at i={int(k.index[bad])}: "
                f"|t1 - t0| = {drift[bad]:.6f} > {delta_max}"
            )
    return k


@dataclass(frozen=True)
class DriftTrace:
    """A clock drift function D mapping channel-0 time to channel-1 time.

    ``affine`` kind: D(t) = alpha * t + beta.
    ``piecewise_linear`` kind: D(t) = t + offset(t) where offset linearly
    interpolates the knots and extends constant beyond the first/last knot.
    D must be monotonically increasing so resampling has a well-defined
    inverse warp.
    """

    kind: str
    alpha: float = 1.0
    beta: float = 0.0
    knots: Optional[Sequence[tuple[float, float]]] = None  # (t, offset) pairs
    delta_max: float = DELTA_MAX_DEFAULT

    def __post_init__(self):
        if self.kind not in ("affine", "piecewise_linear"):
            raise ValueError(f"unknown drift kind: {self.kind!r}")
        if self.kind == "affine":
            if self.alpha <= 0:
                raise ValueError("affine drift must be monotone increasing (alpha > 0)")
        else:
            if not self.knots or len(self.knots) < 1:
                raise ValueError("piecewise_linear drift needs at least one knot")
            ts = np.asarray([t for t, _ in self.knots], dtype=np.float64)
            offs = np.asarray([o for _, o in self.knots], dtype=np.float64)
            if np.any(np.diff(ts) <= 0):
                raise ValueError("piecewise knot times must be strictly increasing")
            if np.any(np.abs(offs) > self.delta_max):
                bad = int(np.argmax(np.abs(offs) > self.delta_max))
                raise ConstraintViolation(
                    f"knot offset {offs[bad]:.6f} at t={ts[bad]:.6f} exceeds "
                    f"delta_max={self.delta_max}"
                )
            d = ts + offs
            if np.any(np.diff(d) <= 0):
                raise ValueError("piecewise drift is not monotone increasing")
            object.__setattr__(self, "knots", tuple((float(t), float(o)) for t, o in self.knots))

    def __call__(self, t):
        """Evaluate D(t); accepts scalars or arrays."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "affine":
            out = self.alpha * t + self.beta
        else:
            ts = np.array([kt for kt, _ in self.knots])
            offs = np.array([o for _, o in self.knots])
            out = t + np.interp(t, ts, offs)
        return out if out.ndim else float(out)

    def check_constraint(self, duration_s: float) -> None:
        """Verify |D(t) - t| <= delta_max at knots and domain endpoints."""
        if self.kind == "affine":
            probe = np.array([0.0, duration_s])
        else:
            ts = np.array([kt for kt, _ in self.knots])
            probe = np.concatenate(([0.0], ts, [duration_s]))
        dev = np.abs(self(probe) - probe)
        if np.any(dev > self.delta_max):
            bad = int(np.argmax(dev > self.delta_max))
            raise ConstraintViolation(
                f"|D(t) - t| = {dev[bad]:.6f} at t={probe[bad]:.6f} exceeds "
                f"delta_max={self.delta_max}"
            )


@dataclass(frozen=True)
class AffineCandidate:
    """An (alpha, beta) drift hypothesis: predicted t1 = alpha * i + beta."""

    alpha: float
    beta: float

    @classmethod
    def bounded(cls, alpha: float, beta: float, delta_max: float,
                t_dur: float) -> "AffineCandidate":
        """Construct with closed-interval bound checks against the search box."""
        lo_a, hi_a = 1.0 - delta_max / t_dur, 1.0 + delta_max / t_dur
        if not (lo_a <= alpha <= hi_a):
            raise ConstraintViolation(
                f"alpha {alpha!r} outside [{lo_a!r}, {hi_a!r}]"
            )
        if not (-delta_max <= beta <= delta_max):
            raise ConstraintViolation(
                f"beta {beta!r} outside [{-delta_max!r}, {delta_max!r}]"
            )
        return cls(alpha, beta)


@dataclass(frozen=True)
class PredictionSet:
    """Per-keypoint alignment probabilities for one candidate."""

    probs: np.ndarray
    logits: np.ndarray
    candidate: AffineCandidate

    def __post_init__(self):
        object.__setattr__(self, "probs", _readonly(self.probs))
        object.__setattr__(self, "logits", _readonly(self.logits))
        if len(self.probs) != len(self.logits):
            raise ValueError("probs and logits lengths differ")
        if len(self.probs) < 1:
            raise ValueError("prediction set must be non-empty")
        if np.max(np.abs(self.probs - logistic(self.logits))) > 1e-12:
            raise ValueError("probs are not the logistic transform of logits")

    @classmethod
    def from_logits(cls, logits, candidate: AffineCandidate) -> "PredictionSet":
        logits = np.asarray(logits, dtype=np.float64)
        return cls(probs=logistic(logits), logits=logits, candidate=candidate)

    def __len__(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class ScoringWeights:
    """Weights of the four confidence-score components."""

    w_pos: float = 0.4
    w_top: float = 0.3
    w_sig: float = 0.2
    w_exp: float = 0.1

    def __post_init__(self):
        vals = (self.w_pos, self.w_top, self.w_sig, self.w_exp)
        if any(w < 0 for w in vals):
            raise ValueError(f"weights must be non-negative, got {vals}")
        if not any(w > 0 for w in vals):
            raise ValueError("all-zero weights are degenerate")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w_pos, self.w_top, self.w_sig, self.w_exp)


@dataclass(frozen=True)
class AlignmentResult:
    """Outcome of candidate selection for one stereo pair."""

    chosen: AffineCandidate
    predicted_t1: np.ndarray
    score: float
    per_candidate_scores: Optional[tuple[tuple[AffineCandidate, float], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "predicted_t1", _readonly(self.predicted_t1))
        if self.per_candidate_scores is not None:
            best = max(s for _, s in self.per_candidate_scores)
            if not math.isclose(best, self.score, rel_tol=0, abs_tol=1e-12):
                raise ValueError("score does not equal the max per-candidate score")


@dataclass(frozen=True)
class EvalReport:
    """MSE summary for one dataset, optionally combined with a second."""

    per_file_mse: dict = field(default_factory=dict)
    dataset_mse: float = float("nan")
    combined: Optional[float] = None
