import numpy as np
import pytest

from driftalign import io as io_mod
from driftalign.features import FeatureConfig
from driftalign.neural import ModelConfig, TrainConfig, train
from driftalign.sim import SynthSpec, make_drift, synth_pair

FS = 8000
N_KEYPOINTS = 60
DURATION = 68.0
DELTA_MAX = 5.0

TOY_FEATURES = FeatureConfig(n_mels=24, n_fft=256, hop=256)
TOY_MODEL = ModelConfig(embed_dim=32, n_heads=4, head_dims=(32, 16, 8),
                        input_dim=TOY_FEATURES.pooled_dim, seed=0)


def random_affine(rng, duration=DURATION, delta_max=DELTA_MAX):
    """A feasible random affine drift with some margin from the bound."""
    beta = rng.uniform(-3.0, 3.0)
    margin = (delta_max - abs(beta)) / duration
    alpha = 1.0 + rng.uniform(-0.9 * margin, 0.9 * margin)
    return make_drift("affine", (alpha, beta), delta_max=delta_max,
                      duration_s=duration)


def write_pair_files(directory, pair_id, ch0, ch1, truth, split):
    wav = directory / f"{pair_id}.wav"
    csv = directory / f"{pair_id}.csv"
    io_mod.write_wav([ch0, ch1], ch0.sample_rate_hz, wav)
    io_mod.write_keypoints(truth, csv)
    return io_mod.ManifestEntry(pair_id, wav, csv, split)


def build_synthetic_dataset(directory, n_train=10, n_val=2, seed=7,
                            n_keypoints=N_KEYPOINTS, duration=DURATION,
                            snr_db=40.0):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for j in range(n_train + n_val):
        drift = random_affine(rng, duration)
        spec = SynthSpec(duration, FS, n_keypoints, "chirp", snr_db,
                         seed=int(rng.integers(2**63)))
        ch0, ch1, truth = synth_pair(spec, drift)
        split = "train" if j < n_train else "val"
        entries.append(write_pair_files(directory, f"pair_{j:03d}",
                                        ch0, ch1, truth, split))
    manifest = io_mod.DatasetManifest("synthetic", tuple(entries))
    io_mod.write_manifest(manifest, directory / "manifest.json")
    return manifest


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    """10 train + 2 val chirp pairs with random affine drift."""
    return build_synthetic_dataset(tmp_path_factory.mktemp("dataset"))


@pytest.fixture(scope="session")
def trained_model(synth_dataset):
    """The toy scorer trained once for the whole session."""
    import time

    train_cfg = TrainConfig(max_epochs=100, keypoint_stride=2, seed=0)
    start = time.process_time()
    params, log = train(synth_dataset, TOY_MODEL, train_cfg, TOY_FEATURES)
    return params, TOY_MODEL, TOY_FEATURES, log, time.process_time() - start


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A small fast dataset for harness-shape tests."""
    return build_synthetic_dataset(
        tmp_path_factory.mktemp("tiny"), n_train=2, n_val=1, seed=21,
        n_keypoints=12, duration=20.0)
