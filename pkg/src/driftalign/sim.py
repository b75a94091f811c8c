"""Synthetic stereo pairs with known clock drift.

Every downstream claim is tested against pairs generated here: a base
channel carrying one distinctive event per 1-second keypoint slot, and a
second channel that is the time-warped base plus fresh background noise
(two microphones share event structure, not noise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .types import (
    DELTA_MAX_DEFAULT,
    AudioBuffer,
    ConstraintViolation,
    DriftTrace,
    KeypointSet,
)


@dataclass(frozen=True)
class SynthSpec:
    duration_s: float
    sample_rate_hz: int
    n_keypoints: int
    event_kind: str = "chirp"  # "click" | "chirp"
    event_snr_db: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.duration_s < self.n_keypoints:
            raise ValueError("duration_s must cover one event per keypoint slot")
        if self.sample_rate_hz < 8000:
            raise ValueError("sample_rate_hz must be at least 8000")
        if self.event_kind not in ("click", "chirp"):
            raise ValueError(f"unknown event kind {self.event_kind!r}")
        if self.n_keypoints < 1:
            raise ValueError("need at least one keypoint")


_EVENT_AMP = 0.7

# Clicks are short decaying noise bursts (sharp correlation peaks); chirps
# sweep a per-event frequency band and fill most of the 1-second slot so a
# window shifted by any amount swaps content at its edges.
_CLICK_S = 0.01
_CHIRP_S = 0.9


def event_waveform(spec: SynthSpec, i: int) -> np.ndarray:
    """The deterministic waveform of event i, unique per keypoint."""
    fs = spec.sample_rate_hz
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0xE4E2, i)))
    if spec.event_kind == "click":
        n = int(_CLICK_S * fs)
        burst = rng.standard_normal(n)
        env = np.exp(-np.arange(n) / (0.2 * n))
        w = burst * env
    else:
        n = int(_CHIRP_S * fs)
        t = np.arange(n) / fs
        nyq = fs / 2.0
        f0 = rng.uniform(0.05 * nyq, 0.6 * nyq)
        f1 = rng.uniform(0.1 * nyq, 0.85 * nyq)
        phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / _CHIRP_S * t**2)
        fade = min(int(0.01 * fs), n // 4)
        env = np.ones(n)
        env[:fade] = np.linspace(0.0, 1.0, fade)
        env[-fade:] = np.linspace(1.0, 0.0, fade)
        w = np.sin(phase + rng.uniform(0, 2 * np.pi)) * env
    peak = np.max(np.abs(w))
    return w * (_EVENT_AMP / peak)


def _noise_std(spec: SynthSpec) -> float:
    if math.isinf(spec.event_snr_db):
        return 0.0
    return _EVENT_AMP * 10.0 ** (-spec.event_snr_db / 20.0)


def _event_track(spec: SynthSpec) -> np.ndarray:
    fs = spec.sample_rate_hz
    out = np.zeros(int(round(spec.duration_s * fs)))
    for i in range(spec.n_keypoints):
        w = event_waveform(spec, i)
        start = i * fs
        stop = min(start + len(w), len(out))
        out[start:stop] += w[: stop - start]
    return out


def synth_base_signal(spec: SynthSpec) -> tuple[AudioBuffer, KeypointSet]:
    """Background noise plus one event starting at each integer second.

    Keypoints are the canonical grid with t1 = t0 (no drift applied yet).
    """
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0xBA5E)))
    track = _event_track(spec)
    sigma = _noise_std(spec)
    if sigma > 0:
        track = track + rng.normal(0.0, sigma, len(track))
    idx = np.arange(spec.n_keypoints)
    k = KeypointSet(index=idx, t0=idx.astype(np.float64),
                    t1=idx.astype(np.float64), canonical_grid=True)
    return AudioBuffer(track, spec.sample_rate_hz), k


def make_drift(kind: str, params, seed: int = 0,
               delta_max: float = DELTA_MAX_DEFAULT,
               duration_s: float | None = None) -> DriftTrace:
    """Build a drift trace.

    ``affine``: params = (alpha, beta); infeasible when
    |beta| + |alpha - 1| * duration exceeds delta_max.
    ``piecewise_linear``: params is either an explicit [(t, offset), ...]
    knot list or (n_knots, duration); random offsets are drawn uniformly in
    [-delta_max, delta_max] and rejection-sampled until the warp is monotone.
    """
    if kind == "affine":
        alpha, beta = params
        if duration_s is not None:
            if abs(beta) + abs(alpha - 1.0) * duration_s > delta_max:
                raise ConstraintViolation(
                    f"infeasible affine drift: |{beta}| + |{alpha} - 1| * "
                    f"{duration_s} > {delta_max}"
                )
        elif abs(beta) > delta_max:
            raise ConstraintViolation(f"|beta| = {abs(beta)} > {delta_max}")
        return DriftTrace(kind="affine", alpha=float(alpha), beta=float(beta),
                          delta_max=delta_max)

    if kind != "piecewise_linear":
        raise ValueError(f"unknown drift kind {kind!r}")

    if isinstance(params, (list, tuple)) and params and \
            isinstance(params[0], (list, tuple)):
        return DriftTrace(kind="piecewise_linear", knots=list(params),
                          delta_max=delta_max)

    n_knots, duration = params
    if n_knots < 2:
        raise ValueError("random piecewise drift needs at least 2 knots")
    rng = np.random.default_rng(seed)
    ts = np.linspace(0.0, float(duration), int(n_knots))
    for _ in range(1000):
        offs = rng.uniform(-delta_max, delta_max, int(n_knots))
        if np.all(np.diff(ts + offs) > 0):
            return DriftTrace(kind="piecewise_linear",
                              knots=list(zip(ts, offs)), delta_max=delta_max)
    raise ConstraintViolation(
        "could not sample a monotone piecewise drift within 1000 tries"
    )


def apply_drift(buffer: AudioBuffer, drift: DriftTrace) -> AudioBuffer:
    """Warp a buffer so an event at input time t appears at output time D(t).

    Output sample at time u is the input linearly interpolated at D^-1(u);
    regions mapping outside the input are zero. Same length as the input.
    """
    fs = buffer.sample_rate_hz
    n = len(buffer)
    u = np.arange(n) / fs
    if drift.kind == "affine":
        src_t = (u - drift.beta) / drift.alpha
    else:
        ts = np.array([kt for kt, _ in drift.knots])
        offs = np.array([o for _, o in drift.knots])
        # D is piecewise linear, so its inverse interpolates (D(t), t) knots;
        # beyond the knot range the offset extends constant.
        knot_t = np.concatenate(([min(0.0, ts[0]) - 1.0], ts,
                                 [max(u[-1], ts[-1]) + drift.delta_max + 1.0]))
        knot_img = np.concatenate(([knot_t[0] + offs[0]], ts + offs,
                                   [knot_t[-1] + offs[-1]]))
        if np.any(np.diff(knot_img) <= 0):
            raise ValueError("drift is not monotone increasing")
        src_t = np.interp(u, knot_img, knot_t)
    src_idx = src_t * fs
    out = np.interp(src_idx, np.arange(n), buffer.samples, left=0.0, right=0.0)
    out[(src_idx < 0) | (src_idx > n - 1)] = 0.0
    return AudioBuffer(out, fs)


def synth_pair(spec: SynthSpec, drift: DriftTrace
               ) -> tuple[AudioBuffer, AudioBuffer, KeypointSet]:
    """Generate (channel 0, drifted channel 1, ground-truth keypoints).

    The warp is applied to the clean event track and each channel gets its
    own independently seeded noise, so the channels share only event
    structure. truth.t1[i] = D(i).
    """
    drift.check_constraint(spec.duration_s)
    fs = spec.sample_rate_hz
    track = _event_track(spec)
    warped = apply_drift(AudioBuffer(track, fs), drift)

    sigma = _noise_std(spec)
    ch0 = track
    ch1 = warped.samples.copy()
    if sigma > 0:
        rng0 = np.random.default_rng(np.random.SeedSequence((spec.seed, 0xBA5E)))
        rng1 = np.random.default_rng(np.random.SeedSequence((spec.seed, 0xC4A1)))
        ch0 = ch0 + rng0.normal(0.0, sigma, len(ch0))
        ch1 = ch1 + rng1.normal(0.0, sigma, len(ch1))

    idx = np.arange(spec.n_keypoints)
    t0 = idx.astype(np.float64)
    truth = KeypointSet(index=idx, t0=t0, t1=drift(t0), canonical_grid=True)
    return AudioBuffer(ch0, fs), AudioBuffer(ch1, fs), truth
