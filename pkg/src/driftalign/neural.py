"""Trainable alignment scorer: encoder, 2-token cross-attention, MLP head.

The network scores a (channel-0 segment, channel-1 segment) pair with a
single logit. Channel features are encoded by a shared affine+GELU layer,
the two embeddings attend to each other as a 2-token sequence, and the
attended pair feeds a residual MLP. Everything is plain numpy with manual
reverse-mode gradients; the finite-difference suite in the tests is the
authority on their correctness.

Conventions used throughout:
  * weights store (out_features, in_features); layers compute h @ W.T + b
  * GELU is the exact Gaussian-CDF form, x * Phi(x)
  * LayerNorm normalizes the feature axis with eps 1e-5
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import erf

from .features import FeatureConfig, Segment, extract_segment
from .io import DatasetManifest, read_keypoints, read_wav
from .types import AudioBuffer, FormatError, logistic

MODEL_MAGIC = b"DRFTMDL1"
_LN_EPS = 1e-5
_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 64
    n_heads: int = 4
    head_dims: tuple[int, int, int] = (64, 32, 16)
    input_dim: int = 80  # 2 * n_mels of the feature frontend
    seed: int = 0
    use_attention: bool = True
    mlp_kind: str = "enhanced"  # "enhanced" | "plain"

    def __post_init__(self):
        if self.embed_dim % self.n_heads != 0:
            raise ValueError("embed_dim must be divisible by n_heads")
        if min(self.embed_dim, self.n_heads, self.input_dim,
               *self.head_dims) < 1:
            raise ValueError("all dimensions must be >= 1")
        if self.mlp_kind not in ("enhanced", "plain"):
            raise ValueError(f"unknown mlp_kind {self.mlp_kind!r}")
        object.__setattr__(self, "head_dims", tuple(int(h) for h in self.head_dims))


def param_shapes(cfg: ModelConfig) -> "OrderedDict[str, tuple[int, ...]]":
    """Parameter tensors in declaration (and serialization) order."""
    d, f = cfg.embed_dim, cfg.input_dim
    h1, h2, h3 = cfg.head_dims
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    shapes["w_enc"] = (d, f)
    shapes["b_enc"] = (d,)
    if cfg.use_attention:
        for name in ("q", "k", "v", "o"):
            shapes[f"w_{name}"] = (d, d)
            shapes[f"b_{name}"] = (d,)
    shapes["w1"] = (h1, 2 * d)
    shapes["b1"] = (h1,)
    if cfg.mlp_kind == "enhanced":
        shapes["g1"] = (h1,)
        shapes["c1"] = (h1,)
        if h1 != h2:
            shapes["w_skip"] = (h2, h1)
        shapes["w2"] = (h2, h1)
        shapes["b2"] = (h2,)
        shapes["g2"] = (h2,)
        shapes["c2"] = (h2,)
        shapes["w3"] = (h3, h2)
        shapes["b3"] = (h3,)
        shapes["g3"] = (h3,)
        shapes["c3"] = (h3,)
        shapes["w4"] = (1, h3)
    else:
        shapes["w4"] = (1, h1)
    shapes["b4"] = (1,)
    return shapes


class ModelParams:
    """Ordered name -> float64 ndarray container with attribute access."""

    def __init__(self, tensors: "OrderedDict[str, np.ndarray]"):
        self.tensors = OrderedDict(
            (k, np.asarray(v, dtype=np.float64)) for k, v in tensors.items()
        )

    def __getattr__(self, name):
        try:
            return self.__dict__["tensors"][name]
        except KeyError:
            raise AttributeError(name) from None

    def __contains__(self, name) -> bool:
        return name in self.tensors

    def copy(self) -> "ModelParams":
        return ModelParams(OrderedDict((k, v.copy()) for k, v in self.tensors.items()))

    def n_parameters(self) -> int:
        return sum(v.size for v in self.tensors.values())


def init_params(cfg: ModelConfig) -> ModelParams:
    """Uniform +-1/sqrt(fan_in) init; LayerNorm gains 1, biases 0."""
    rng = np.random.default_rng(cfg.seed)
    tensors: OrderedDict[str, np.ndarray] = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        if name.startswith("g"):
            tensors[name] = np.ones(shape)
        elif name.startswith("c"):
            tensors[name] = np.zeros(shape)
        else:
            fan_in = shape[-1] if len(shape) > 1 else _bias_fan_in(name, cfg)
            bound = 1.0 / np.sqrt(fan_in)
            tensors[name] = rng.uniform(-bound, bound, shape)
    return ModelParams(tensors)


def _bias_fan_in(bias_name: str, cfg: ModelConfig) -> int:
    d = cfg.embed_dim
    h1, h2, h3 = cfg.head_dims
    return {
        "b_enc": cfg.input_dim,
        "b_q": d, "b_k": d, "b_v": d, "b_o": d,
        "b1": 2 * d, "b2": h1, "b3": h2,
        "b4": h3 if cfg.mlp_kind == "enhanced" else h1,
    }[bias_name]


def gelu(x: np.ndarray) -> np.ndarray:
    return x * 0.5 * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    phi = 0.5 * (1.0 + erf(x / _SQRT2))
    return phi + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def _layernorm_fwd(a, g, c):
    mu = a.mean(axis=-1, keepdims=True)
    xc = a - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return g * xhat + c, (xhat, inv)


def _layernorm_bwd(dn, g, cache):
    xhat, inv = cache
    dg = (dn * xhat).sum(axis=0)
    dc = dn.sum(axis=0)
    dxhat = dn * g
    da = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return da, dg, dc


def encode(pooled: np.ndarray, params: ModelParams) -> np.ndarray:
    """Channel embedding e = GELU(W_enc x + b_enc); accepts (F,) or (B, F)."""
    x = np.atleast_2d(np.asarray(pooled, dtype=np.float64))
    e = gelu(x @ params.w_enc.T + params.b_enc)
    return e[0] if np.asarray(pooled).ndim == 1 else e


def _attention_fwd(e0, e1, params: ModelParams, cfg: ModelConfig):
    b, d = e0.shape
    h, dk = cfg.n_heads, cfg.embed_dim // cfg.n_heads
    ein = np.stack([e0, e1], axis=1)  # (B, 2, d)
    q = ein @ params.w_q.T + params.b_q
    k = ein @ params.w_k.T + params.b_k
    v = ein @ params.w_v.T + params.b_v
    qh = q.reshape(b, 2, h, dk).transpose(0, 2, 1, 3)  # (B, H, 2, dk)
    kh = k.reshape(b, 2, h, dk).transpose(0, 2, 1, 3)
    vh = v.reshape(b, 2, h, dk).transpose(0, 2, 1, 3)
    scores = qh @ kh.transpose(0, 1, 3, 2) / np.sqrt(dk)  # (B, H, 2, 2)
    scores = scores - scores.max(axis=-1, keepdims=True)
    expo = np.exp(scores)
    attn = expo / expo.sum(axis=-1, keepdims=True)
    oh = attn @ vh
    omerged = oh.transpose(0, 2, 1, 3).reshape(b, 2, d)
    eout = omerged @ params.w_o.T + params.b_o
    cache = (ein, qh, kh, vh, attn, omerged)
    return eout[:, 0, :], eout[:, 1, :], cache


def _attention_bwd(de0p, de1p, params: ModelParams, cfg: ModelConfig, cache, grads):
    ein, qh, kh, vh, attn, omerged = cache
    b, _, d = ein.shape
    h, dk = cfg.n_heads, cfg.embed_dim // cfg.n_heads
    deout = np.stack([de0p, de1p], axis=1)  # (B, 2, d)

    grads["w_o"] += deout.reshape(-1, d).T @ omerged.reshape(-1, d)
    grads["b_o"] += deout.sum(axis=(0, 1))
    domerged = deout @ params.w_o
    doh = domerged.reshape(b, 2, h, dk).transpose(0, 2, 1, 3)

    dattn = doh @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ doh
    # softmax rows: dS = A * (dA - sum(dA * A))
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores = dscores / np.sqrt(dk)
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh

    dq = dqh.transpose(0, 2, 1, 3).reshape(b, 2, d)
    dk_ = dkh.transpose(0, 2, 1, 3).reshape(b, 2, d)
    dv = dvh.transpose(0, 2, 1, 3).reshape(b, 2, d)

    dein = np.zeros_like(ein)
    for dmat, wname in ((dq, "q"), (dk_, "k"), (dv, "v")):
        grads[f"w_{wname}"] += dmat.reshape(-1, d).T @ ein.reshape(-1, d)
        grads[f"b_{wname}"] += dmat.sum(axis=(0, 1))
        dein += dmat @ getattr(params, f"w_{wname}")
    return dein[:, 0, :], dein[:, 1, :]


def cross_attention(e0, e1, params: ModelParams,
                    cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Attend the two channel embeddings to each other; returns (e0', e1')."""
    single = np.asarray(e0).ndim == 1
    e0 = np.atleast_2d(np.asarray(e0, dtype=np.float64))
    e1 = np.atleast_2d(np.asarray(e1, dtype=np.float64))
    e0p, e1p, _ = _attention_fwd(e0, e1, params, cfg)
    return (e0p[0], e1p[0]) if single else (e0p, e1p)


def attention_weights(e0, e1, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    """The (heads, 2, 2) attention matrix for one embedding pair."""
    e0 = np.atleast_2d(np.asarray(e0, dtype=np.float64))
    e1 = np.atleast_2d(np.asarray(e1, dtype=np.float64))
    _, _, cache = _attention_fwd(e0, e1, params, cfg)
    return cache[4][0]


def _mlp_fwd(e0p, e1p, params: ModelParams, cfg: ModelConfig):
    z = np.concatenate([e0p, e1p], axis=1)
    a1 = z @ params.w1.T + params.b1
    if cfg.mlp_kind == "plain":
        hid = gelu(a1)
        y = (hid @ params.w4.T + params.b4)[:, 0]
        return y, (z, a1, hid)
    h1, h2, _ = cfg.head_dims
    n1, ln1 = _layernorm_fwd(a1, params.g1, params.c1)
    r1 = gelu(n1)
    a2 = r1 @ params.w2.T + params.b2
    n2, ln2 = _layernorm_fwd(a2, params.g2, params.c2)
    g2a = gelu(n2)
    skip = r1 @ params.w_skip.T if h1 != h2 else r1
    r2 = g2a + skip
    a3 = r2 @ params.w3.T + params.b3
    n3, ln3 = _layernorm_fwd(a3, params.g3, params.c3)
    r3 = gelu(n3)
    y = (r3 @ params.w4.T + params.b4)[:, 0]
    return y, (z, a1, ln1, n1, r1, a2, ln2, n2, g2a, r2, a3, ln3, n3, r3)


def _mlp_bwd(dy, params: ModelParams, cfg: ModelConfig, cache, grads):
    d = cfg.embed_dim
    if cfg.mlp_kind == "plain":
        z, a1, hid = cache
        dyc = dy[:, None]
        grads["w4"] += dyc.T @ hid
        grads["b4"] += dyc.sum(axis=0)
        dhid = dyc @ params.w4
        da1 = dhid * gelu_grad(a1)
        grads["w1"] += da1.T @ z
        grads["b1"] += da1.sum(axis=0)
        dz = da1 @ params.w1
        return dz[:, :d], dz[:, d:]

    h1, h2, _ = cfg.head_dims
    z, a1, ln1, n1, r1, a2, ln2, n2, g2a, r2, a3, ln3, n3, r3 = cache
    dyc = dy[:, None]
    grads["w4"] += dyc.T @ r3
    grads["b4"] += dyc.sum(axis=0)
    dr3 = dyc @ params.w4
    dn3 = dr3 * gelu_grad(n3)
    da3, dg3, dc3 = _layernorm_bwd(dn3, params.g3, ln3)
    grads["g3"] += dg3
    grads["c3"] += dc3
    grads["w3"] += da3.T @ r2
    grads["b3"] += da3.sum(axis=0)
    dr2 = da3 @ params.w3

    dg2a = dr2
    dn2 = dg2a * gelu_grad(n2)
    da2, dg2, dc2 = _layernorm_bwd(dn2, params.g2, ln2)
    grads["g2"] += dg2
    grads["c2"] += dc2
    grads["w2"] += da2.T @ r1
    grads["b2"] += da2.sum(axis=0)
    dr1 = da2 @ params.w2
    if h1 != h2:
        grads["w_skip"] += dr2.T @ r1
        dr1 = dr1 + dr2 @ params.w_skip
    else:
        dr1 = dr1 + dr2

    dn1 = dr1 * gelu_grad(n1)
    da1, dg1, dc1 = _layernorm_bwd(dn1, params.g1, ln1)
    grads["g1"] += dg1
    grads["c1"] += dc1
    grads["w1"] += da1.T @ z
    grads["b1"] += da1.sum(axis=0)
    dz = da1 @ params.w1
    return dz[:, :d], dz[:, d:]


def mlp_head(e0p, e1p, params: ModelParams, cfg: ModelConfig):
    """Score an attended embedding pair; concatenation order is [e0'; e1']."""
    single = np.asarray(e0p).ndim == 1
    e0p = np.atleast_2d(np.asarray(e0p, dtype=np.float64))
    e1p = np.atleast_2d(np.asarray(e1p, dtype=np.float64))
    y, _ = _mlp_fwd(e0p, e1p, params, cfg)
    return float(y[0]) if single else y


def forward_pooled(x0, x1, params: ModelParams, cfg: ModelConfig):
    """Batched logits from pooled channel features (B, input_dim)."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    ae0 = x0 @ params.w_enc.T + params.b_enc
    ae1 = x1 @ params.w_enc.T + params.b_enc
    e0 = gelu(ae0)
    e1 = gelu(ae1)
    if cfg.use_attention:
        e0p, e1p, att_cache = _attention_fwd(e0, e1, params, cfg)
    else:
        e0p, e1p, att_cache = e0, e1, None
    y, mlp_cache = _mlp_fwd(e0p, e1p, params, cfg)
    cache = (x0, x1, ae0, ae1, att_cache, mlp_cache)
    return y, cache


def forward(seg0: Segment, seg1: Segment, params: ModelParams,
            cfg: ModelConfig, feature_cfg: FeatureConfig) -> tuple[float, float]:
    """Logit and aligned-probability for one segment pair."""
    from .features import log_mel, pool_features

    x0 = pool_features(log_mel(seg0, feature_cfg))
    x1 = pool_features(log_mel(seg1, feature_cfg))
    y, _ = forward_pooled(x0, x1, params, cfg)
    return float(y[0]), float(logistic(y[0]))


def bce_loss(logits, labels) -> float:
    """Mean binary cross-entropy from logits: softplus(y) - label * y."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, logits) - labels * logits))


def _zero_grads(params: ModelParams) -> dict:
    return {k: np.zeros_like(v) for k, v in params.tensors.items()}


def loss_and_grads_pooled(x0, x1, labels, params: ModelParams,
                          cfg: ModelConfig) -> tuple[float, dict]:
    """Mean BCE over a batch of pooled feature pairs, with full gradients.

    Loss is computed from logits as softplus(y) - label * y, which is the
    numerically stable binary cross-entropy.
    """
    labels = np.asarray(labels, dtype=np.float64)
    y, cache = forward_pooled(x0, x1, params, cfg)
    x0b, x1b, ae0, ae1, att_cache, mlp_cache = cache
    n = len(y)
    loss = bce_loss(y, labels)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite training loss")

    grads = _zero_grads(params)
    dy = (logistic(y) - labels) / n
    de0p, de1p = _mlp_bwd(dy, params, cfg, mlp_cache, grads)
    if cfg.use_attention:
        de0, de1 = _attention_bwd(de0p, de1p, params, cfg, att_cache, grads)
    else:
        de0, de1 = de0p, de1p
    dae0 = de0 * gelu_grad(ae0)
    dae1 = de1 * gelu_grad(ae1)
    grads["w_enc"] += dae0.T @ x0b + dae1.T @ x1b
    grads["b_enc"] += dae0.sum(axis=0) + dae1.sum(axis=0)
    return loss, grads


@dataclass(frozen=True)
class AugSample:
    """One training pair of raw segments with its alignment label."""

    seg0: Segment
    seg1: Segment
    label: int
    amp: float = 1.0
    noise_var: float = 0.0


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    weight_decay: float = 0.01
    batch_size: int = 32
    max_epochs: int = 100
    early_stop_patience: int = 25
    plateau_factor: float = 0.7
    plateau_patience: int = 3
    augment_prob: float = 0.3
    amp_range: tuple[float, float] = (0.9, 1.1)
    snr_range_db: tuple[float, float] = (40.0, 50.0)
    keypoint_stride: int = 20
    neg_offset_range: tuple[float, float] = (0.5, 5.0)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError("plateau_factor must be in (0, 1)")
        if self.keypoint_stride < 1:
            raise ValueError("keypoint_stride must be >= 1")
        if not 0.0 <= self.augment_prob <= 1.0:
            raise ValueError("augment_prob must be in [0, 1]")


def sample_training_pairs(manifest: DatasetManifest, stride: int,
                          neg_offset_range: tuple[float, float] = (0.5, 5.0),
                          seed: int = 0,
                          feature_cfg: FeatureConfig = FeatureConfig(),
                          split: str = "train") -> list[AugSample]:
    """Strided positives plus one offset negative per positive.

    Positives pair the channel-0 segment at t0[i] with the channel-1
    segment at the annotated t1[i] for every ``stride``-th keypoint.
    Negatives reuse the same keypoints with t1 pushed by a uniform offset
    whose magnitude lies in ``neg_offset_range`` (sign random), keeping a
    dead zone around the true location so labels stay clean.
    """
    rng = np.random.default_rng(seed)
    samples: list[AugSample] = []
    entries = manifest.split(split)
    if not entries:
        raise ValueError(f"manifest has no {split!r} entries")
    for entry in entries:
        channels = read_wav(entry.wav_path)
        if len(channels) != 2:
            raise ValueError(f"{entry.wav_path}: expected stereo")
        keypoints = read_keypoints(entry.keypoints_path)
        samples.extend(sample_pairs_for_file(
            channels[0], channels[1], keypoints, stride,
            neg_offset_range, rng, feature_cfg))
    return samples


def sample_pairs_for_file(ch0: AudioBuffer, ch1: AudioBuffer, keypoints,
                          stride: int, neg_offset_range, rng,
                          feature_cfg: FeatureConfig) -> list[AugSample]:
    if keypoints.t1 is None:
        raise ValueError("training keypoints must carry t1")
    if len(keypoints) == 0:
        raise ValueError("empty keypoint set")
    lo, hi = neg_offset_range
    samples = []
    for i in range(0, len(keypoints), stride):
        t0 = float(keypoints.t0[i])
        t1 = float(keypoints.t1[i])
        seg0 = extract_segment(ch0, t0, feature_cfg, channel=0)
        seg1 = extract_segment(ch1, t1, feature_cfg, channel=1)
        samples.append(AugSample(seg0, seg1, label=1))
        offset = rng.uniform(lo, hi) * (1 if rng.random() < 0.5 else -1)
        neg1 = extract_segment(ch1, t1 + offset, feature_cfg, channel=1)
        samples.append(AugSample(seg0, neg1, label=0))
    return samples


def augment(sample: AugSample, rng, cfg: TrainConfig) -> AugSample:
    """Conservative synchronized augmentation.

    With probability ``augment_prob``, scale both channels by one shared
    amplitude factor and add Gaussian noise at a shared target SNR; the
    noise for both channels is drawn from one child seed so the channels
    stay synchronized.
    """
    if rng.random() >= cfg.augment_prob:
        return sample
    amp = rng.uniform(*cfg.amp_range)
    lo, hi = cfg.snr_range_db
    snr_db = lo if lo == hi else rng.uniform(lo, hi)  # lo == hi may be inf
    noise_seed = int(rng.integers(0, 2**63))

    s0 = sample.seg0.samples * amp
    s1 = sample.seg1.samples * amp
    power = 0.5 * (np.mean(s0 * s0) + np.mean(s1 * s1))
    sigma2 = 0.0 if np.isinf(snr_db) else power / 10.0 ** (snr_db / 10.0)
    if sigma2 > 0:
        noise_rng = np.random.default_rng(noise_seed)
        s0 = s0 + noise_rng.normal(0.0, np.sqrt(sigma2), len(s0))
        s1 = s1 + noise_rng.normal(0.0, np.sqrt(sigma2), len(s1))
    return AugSample(
        seg0=replace(sample.seg0, samples=s0),
        seg1=replace(sample.seg1, samples=s1),
        label=sample.label, amp=amp, noise_var=sigma2,
    )


class AdamW:
    """Decoupled weight decay Adam; state starts at zero."""

    def __init__(self, lr: float, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in params.tensors.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m += (1 - b1) * (g - m)
            v += (1 - b2) * (g * g - v)
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p -= self.lr * (mhat / (np.sqrt(vhat) + self.eps)
                            + self.weight_decay * p)


class PlateauSchedule:
    """Learning-rate plateau reduction plus early-stopping bookkeeping."""

    def __init__(self, lr: float, plateau_factor: float, plateau_patience: int,
                 early_stop_patience: int):
        self.lr = lr
        self.factor = plateau_factor
        self.plateau_patience = plateau_patience
        self.early_stop_patience = early_stop_patience
        self.best = np.inf
        self._bad_lr = 0
        self._bad_stop = 0

    def observe(self, val_loss: float) -> tuple[bool, bool]:
        """Record an epoch's validation loss -> (is_best, should_stop)."""
        if val_loss < self.best:
            self.best = val_loss
            self._bad_lr = 0
            self._bad_stop = 0
            return True, False
        self._bad_lr += 1
        self._bad_stop += 1
        if self._bad_lr >= self.plateau_patience:
            self.lr *= self.factor
            self._bad_lr = 0
        return False, self._bad_stop >= self.early_stop_patience


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


def _pool_batch(samples: list[AugSample], feature_cfg: FeatureConfig):
    from .features import log_mel, pool_features

    x0 = np.stack([pool_features(log_mel(s.seg0, feature_cfg)) for s in samples])
    x1 = np.stack([pool_features(log_mel(s.seg1, feature_cfg)) for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.float64)
    return x0, x1, labels


def loss_and_grads(batch: list[AugSample], params: ModelParams,
                   cfg: ModelConfig,
                   feature_cfg: FeatureConfig = FeatureConfig()):
    """BCE loss and gradients for a batch of raw segment pairs."""
    if not batch:
        raise ValueError("empty batch")
    x0, x1, labels = _pool_batch(batch, feature_cfg)
    return loss_and_grads_pooled(x0, x1, labels, params, cfg)


def train(manifest: DatasetManifest, model_cfg: ModelConfig,
          train_cfg: TrainConfig,
          feature_cfg: FeatureConfig = FeatureConfig(),
          ) -> tuple[ModelParams, list[EpochLog]]:
    """Full training loop; returns the best-validation-loss parameters.

    Single-threaded and deterministic for a fixed seed: sample order,
    augmentation draws, and parameter init all flow from seeded generators.
    """
    train_samples = sample_training_pairs(
        manifest, train_cfg.keypoint_stride, train_cfg.neg_offset_range,
        train_cfg.seed, feature_cfg, split="train")
    val_samples = sample_training_pairs(
        manifest, train_cfg.keypoint_stride, train_cfg.neg_offset_range,
        train_cfg.seed + 1, feature_cfg, split="val")

    params = init_params(model_cfg)
    optimizer = AdamW(train_cfg.lr, train_cfg.weight_decay)
    schedule = PlateauSchedule(train_cfg.lr, train_cfg.plateau_factor,
                               train_cfg.plateau_patience,
                               train_cfg.early_stop_patience)
    rng = np.random.default_rng(train_cfg.seed)
    vx0, vx1, vlabels = _pool_batch(val_samples, feature_cfg)
    # features of unaugmented samples never change; compute them once
    clean0, clean1, clean_labels = _pool_batch(train_samples, feature_cfg)

    best = params.copy()
    log: list[EpochLog] = []
    for epoch in range(1, train_cfg.max_epochs + 1):
        order = rng.permutation(len(train_samples))
        optimizer.lr = schedule.lr
        lr_in_effect = schedule.lr
        epoch_losses = []
        for start in range(0, len(order), train_cfg.batch_size):
            rows0, rows1, labels = [], [], []
            for j in order[start:start + train_cfg.batch_size]:
                aug = augment(train_samples[j], rng, train_cfg)
                if aug is train_samples[j]:
                    rows0.append(clean0[j])
                    rows1.append(clean1[j])
                else:
                    f0, f1, _ = _pool_batch([aug], feature_cfg)
                    rows0.append(f0[0])
                    rows1.append(f1[0])
                labels.append(clean_labels[j])
            loss, grads = loss_and_grads_pooled(
                np.stack(rows0), np.stack(rows1), np.array(labels),
                params, model_cfg)
            optimizer.step(params, grads)
            epoch_losses.append(loss)

        val_y, _ = forward_pooled(vx0, vx1, params, model_cfg)
        val_loss = bce_loss(val_y, vlabels)
        train_loss = float(np.mean(epoch_losses))
        log.append(EpochLog(epoch, train_loss, val_loss, lr_in_effect))
        is_best, should_stop = schedule.observe(val_loss)
        if is_best:
            best = params.copy()
        if should_stop:
            break
    return best, log


def write_training_log(log: list[EpochLog], path) -> None:
    lines = ["epoch,train_loss,val_loss,lr"]
    for row in log:
        lines.append(f"{row.epoch},{row.train_loss:.9f},{row.val_loss:.9f},{row.lr:.9g}")
    Path(path).write_text("\n".join(lines) + "\n")


def save_model(params: ModelParams, cfg: ModelConfig, path) -> None:
    """Versioned binary checkpoint: config header plus float32 tensors."""
    cfg_doc = {
        "embed_dim": cfg.embed_dim,
        "n_heads": cfg.n_heads,
        "head_dims": list(cfg.head_dims),
        "input_dim": cfg.input_dim,
        "seed": cfg.seed,
        "use_attention": cfg.use_attention,
        "mlp_kind": cfg.mlp_kind,
    }
    blob = json.dumps(cfg_doc, sort_keys=True).encode()
    chunks = [MODEL_MAGIC, struct.pack("<I", len(blob)), blob]
    for name, shape in param_shapes(cfg).items():
        tensor = params.tensors[name]
        if tensor.shape != shape:
            raise ValueError(f"tensor {name} has shape {tensor.shape}, expected {shape}")
        chunks.append(tensor.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path) -> tuple[ModelParams, ModelConfig]:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:8] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad model magic")
    (blob_len,) = struct.unpack_from("<I", raw, 8)
    cfg_doc = json.loads(raw[12:12 + blob_len].decode())
    cfg = ModelConfig(
        embed_dim=cfg_doc["embed_dim"],
        n_heads=cfg_doc["n_heads"],
        head_dims=tuple(cfg_doc["head_dims"]),
        input_dim=cfg_doc["input_dim"],
        seed=cfg_doc["seed"],
        use_attention=cfg_doc["use_attention"],
        mlp_kind=cfg_doc["mlp_kind"],
    )
    offset = 12 + blob_len
    tensors: OrderedDict[str, np.ndarray] = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(raw):
            raise FormatError(f"{path}: truncated checkpoint at tensor {name}")
        tensors[name] = np.frombuffer(raw[offset:end], dtype="<f4").astype(
            np.float64).reshape(shape)
        offset = end
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return ModelParams(tensors), cfg
