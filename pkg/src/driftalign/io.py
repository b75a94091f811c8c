"""File formats: WAV audio, keypoint CSV, dataset manifests, embeddings.

All functions are pure path-in / value-out; callers may parallelize over
files. Sample rates are always carried explicitly, never assumed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .types import AudioBuffer, FormatError, KeypointSet, validate_keypoints

EMBEDDING_MAGIC = b"DRFTEMB1"

_WAVE_PCM = 0x0001
_WAVE_IEEE_FLOAT = 0x0003

# wFormatTag values we name in error messages when rejecting a file
_KNOWN_UNSUPPORTED = {
    0x0002: "ADPCM",
    0x0006: "A-law",
    0x0007: "mu-law",
    0xFFFE: "WAVE_FORMAT_EXTENSIBLE",
}


def read_wav(path) -> list[AudioBuffer]:
    """Read a RIFF/WAVE file into one AudioBuffer per channel.

    Supports PCM 16-bit (scaled by 1/32768) and IEEE float32, 1 or 2
    channels. Anything else raises FormatError.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (csize,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + csize]
        if cid == b"fmt ":
            if csize < 16:
                raise FormatError(f"{path}: fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < csize:
                raise FormatError(f"{path}: truncated data chunk "
                                  f"(declared {csize}, got {len(body)})")
            data = body
        pos += 8 + csize + (csize & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise FormatError(f"{path}: missing fmt or data chunk")
    wformat, channels, rate, _byterate, block_align, bits = fmt
    if rate == 0:
        raise FormatError(f"{path}: zero sample rate")
    if channels not in (1, 2):
        raise FormatError(f"{path}: unsupported channel count {channels}")

    if wformat == _WAVE_PCM and bits == 16:
        frames = np.frombuffer(data[:len(data) - len(data) % block_align],
                               dtype="<i2")
        samples = frames.astype(np.float64) / 32768.0
    elif wformat == _WAVE_IEEE_FLOAT and bits == 32:
        frames = np.frombuffer(data[:len(data) - len(data) % block_align],
                               dtype="<f4")
        samples = frames.astype(np.float64)
    else:
        name = _KNOWN_UNSUPPORTED.get(wformat, f"format tag {wformat}")
        raise FormatError(
            f"{path}: unsupported encoding ({name}, {bits}-bit); "
            "only PCM16 and IEEE float32 are readable"
        )

    per_channel = samples.reshape(-1, channels).T
    return [AudioBuffer(ch.copy(), int(rate)) for ch in per_channel]


def write_wav(buffers, sample_rate_hz: int, path, encoding: str = "float32") -> None:
    """Write 1-2 equal-length channels as PCM16 or IEEE float32 WAV.

    float32 round-trips bit-exactly; PCM16 round-trips within one
    quantization step (1/32768).
    """
    if isinstance(buffers, AudioBuffer):
        buffers = [buffers]
    arrays = [np.asarray(b.samples if isinstance(b, AudioBuffer) else b,
                         dtype=np.float64) for b in buffers]
    if not 1 <= len(arrays) <= 2:
        raise ValueError(f"need 1 or 2 channels, got {len(arrays)}")
    if len({len(a) for a in arrays}) != 1:
        raise ValueError(
            f"channel length mismatch: {[len(a) for a in arrays]}"
        )

    interleaved = np.stack(arrays, axis=1).reshape(-1)
    if encoding == "pcm16":
        ints = np.clip(np.round(interleaved * 32768.0), -32768, 32767)
        payload = ints.astype("<i2").tobytes()
        wformat, bits = _WAVE_PCM, 16
    elif encoding == "float32":
        payload = interleaved.astype("<f4").tobytes()
        wformat, bits = _WAVE_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}")

    channels = len(arrays)
    block_align = channels * bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, wformat, channels, sample_rate_hz,
        sample_rate_hz * block_align, block_align, bits,
        b"data", len(payload),
    )
    Path(path).write_bytes(header + payload)


def read_keypoints(path, delta_max: float = 5.0) -> KeypointSet:
    """Parse a `index,t0,t1` CSV; t1 may be empty on every row (inference)."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "index,t0,t1":
        raise FormatError(f"{path}: expected header 'index,t0,t1'")
    idx, t0, t1 = [], [], []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise FormatError(f"{path}:{ln}: expected 3 columns, got {len(parts)}")
        try:
            idx.append(int(parts[0]))
            t0.append(float(parts[1]))
            t1.append(float(parts[2]) if parts[2].strip() else None)
        except ValueError as e:
            raise FormatError(f"{path}:{ln}: {e}") from None
    if not idx:
        raise FormatError(f"{path}: no keypoint rows")
    have_t1 = [v is not None for v in t1]
    if any(have_t1) and not all(have_t1):
        first = have_t1.index(False) + 2
        raise FormatError(f"{path}:{first}: t1 present on some rows but not all")

    index = np.array(idx, dtype=np.int64)
    t0a = np.array(t0, dtype=np.float64)
    t1a = np.array(t1, dtype=np.float64) if all(have_t1) else None
    canonical = bool(np.array_equal(index, np.arange(len(index)))
                     and np.array_equal(t0a, index.astype(np.float64)))
    k = KeypointSet(index=index, t0=t0a, t1=t1a, canonical_grid=canonical)
    return validate_keypoints(k, delta_max)


def write_keypoints(k: KeypointSet, path) -> None:
    lines = ["index,t0,t1"]
    for j in range(len(k)):
        t1s = f"{k.t1[j]:.9f}" if k.t1 is not None else ""
        lines.append(f"{int(k.index[j])},{k.t0[j]:.9f},{t1s}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_predictions(path) -> KeypointSet:
    """Parse an alignment output CSV with header `index,t0,t1_pred`."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "index,t0,t1_pred":
        raise FormatError(f"{path}: expected header 'index,t0,t1_pred'")
    idx, t0, t1 = [], [], []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise FormatError(f"{path}:{ln}: expected 3 columns, got {len(parts)}")
        try:
            idx.append(int(parts[0]))
            t0.append(float(parts[1]))
            t1.append(float(parts[2]))
        except ValueError as e:
            raise FormatError(f"{path}:{ln}: {e}") from None
    if not idx:
        raise FormatError(f"{path}: no prediction rows")
    return KeypointSet(index=np.array(idx, dtype=np.int64),
                       t0=np.array(t0, dtype=np.float64),
                       t1=np.array(t1, dtype=np.float64))


@dataclass(frozen=True)
class ManifestEntry:
    pair_id: str
    wav_path: Path
    keypoints_path: Path
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    dataset_name: str
    entries: tuple[ManifestEntry, ...]

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]


def read_manifest(path) -> DatasetManifest:
    """Load a dataset manifest; paths resolve relative to the manifest dir."""
    path = Path(path)
    doc = json.loads(path.read_text())
    base = path.parent
    entries = []
    seen = set()
    for item in doc["entries"]:
        pid = item["pair_id"]
        if pid in seen:
            raise FormatError(f"{path}: duplicate pair_id {pid!r}")
        seen.add(pid)
        wav = (base / item["wav_path"]).resolve()
        kp = (base / item["keypoints_path"]).resolve()
        for p in (wav, kp):
            if not p.exists():
                raise FormatError(f"{path}: referenced file missing: {p}")
        if item["split"] not in ("train", "val", "test"):
            raise FormatError(f"{path}: bad split {item['split']!r} for {pid}")
        entries.append(ManifestEntry(pid, wav, kp, item["split"]))
    return DatasetManifest(doc.get("dataset_name", path.stem), tuple(entries))


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    base = path.parent.resolve()
    doc = {
        "dataset_name": manifest.dataset_name,
        "entries": [
            {
                "pair_id": e.pair_id,
                "wav_path": _relativize(e.wav_path, base),
                "keypoints_path": _relativize(e.keypoints_path, base),
                "split": e.split,
            }
            for e in manifest.entries
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _relativize(p: Path, base: Path) -> str:
    try:
        return Path(p).resolve().relative_to(base).as_posix()
    except ValueError:
        return Path(p).resolve().as_posix()


def read_embeddings(path) -> np.ndarray:
    """Read a binary embedding file into a float32 (count, dim) matrix."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic (expected {EMBEDDING_MAGIC!r})")
    count, dim = struct.unpack_from("<II", raw, 8)
    if dim == 0:
        raise FormatError(f"{path}: zero embedding dimension")
    expected = count * dim * 4
    payload = raw[16:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: size mismatch (header implies {expected} payload bytes, "
            f"got {len(payload)})"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()


def write_embeddings(matrix: np.ndarray, path) -> None:
    matrix = np.asarray(matrix, dtype="<f4")
    if matrix.ndim != 2 or matrix.shape[1] == 0:
        raise ValueError("embedding matrix must be 2-D with dim > 0")
    count, dim = matrix.shape
    Path(path).write_bytes(
        EMBEDDING_MAGIC + struct.pack("<II", count, dim) + matrix.tobytes()
    )
