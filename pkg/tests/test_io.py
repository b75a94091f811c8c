import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftalign import io as io_mod
from driftalign.types import ConstraintViolation, FormatError


def float32_samples(min_size=1, max_size=200):
    return st.lists(
        st.floats(min_value=-1.0, max_value=1.0, width=32),
        min_size=min_size, max_size=max_size,
    ).map(lambda xs: np.array(xs, dtype=np.float32).astype(np.float64))


class TestWav:
    def test_stereo_pcm16_roundtrip_shape(self, tmp_path):
        path = tmp_path / "x.wav"
        data = np.linspace(-0.5, 0.5, 10)
        io_mod.write_wav([data, -data], 16000, path, encoding="pcm16")
        bufs = io_mod.read_wav(path)
        assert len(bufs) == 2
        assert all(len(b) == 10 and b.sample_rate_hz == 16000 for b in bufs)

    def test_int16_scaling(self, tmp_path):
        path = tmp_path / "x.wav"
        payload = struct.pack("<h", 32767)
        header = struct.pack(
            "<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(payload), b"WAVE",
            b"fmt ", 16, 1, 1, 16000, 32000, 2, 16, b"data", len(payload))
        path.write_bytes(header + payload)
        (buf,) = io_mod.read_wav(path)
        assert buf.samples[0] == pytest.approx(32767 / 32768)

    def test_mulaw_rejected(self, tmp_path):
        path = tmp_path / "x.wav"
        header = struct.pack(
            "<4sI4s4sIHHIIHH4sI", b"RIFF", 40, b"WAVE",
            b"fmt ", 16, 7, 1, 8000, 8000, 1, 8, b"data", 4)
        path.write_bytes(header + b"\x00" * 4)
        with pytest.raises(FormatError, match="mu-law"):
            io_mod.read_wav(path)

    def test_pcm24_rejected(self, tmp_path):
        path = tmp_path / "x.wav"
        header = struct.pack(
            "<4sI4s4sIHHIIHH4sI", b"RIFF", 42, b"WAVE",
            b"fmt ", 16, 1, 1, 8000, 24000, 3, 24, b"data", 6)
        path.write_bytes(header + b"\x00" * 6)
        with pytest.raises(FormatError, match="unsupported encoding"):
            io_mod.read_wav(path)

    def test_zero_sample_rate_rejected(self, tmp_path):
        path = tmp_path / "x.wav"
        header = struct.pack(
            "<4sI4s4sIHHIIHH4sI", b"RIFF", 38, b"WAVE",
            b"fmt ", 16, 1, 1, 0, 0, 2, 16, b"data", 2)
        path.write_bytes(header + b"\x00" * 2)
        with pytest.raises(FormatError, match="zero sample rate"):
            io_mod.read_wav(path)

    def test_truncated_data_rejected(self, tmp_path):
        path = tmp_path / "x.wav"
        header = struct.pack(
            "<4sI4s4sIHHIIHH4sI", b"RIFF", 136, b"WAVE",
            b"fmt ", 16, 1, 1, 8000, 16000, 2, 16, b"data", 100)
        path.write_bytes(header + b"\x00" * 10)
        with pytest.raises(FormatError, match="truncated"):
            io_mod.read_wav(path)

    def test_channel_length_mismatch(self, tmp_path):
        with pytest.raises(ValueError, match="mismatch"):
            io_mod.write_wav([np.zeros(10), np.zeros(11)], 8000,
                             tmp_path / "x.wav")

    def test_silence_data_chunk_zero(self, tmp_path):
        path = tmp_path / "x.wav"
        io_mod.write_wav([np.zeros(16)], 8000, path, encoding="pcm16")
        raw = path.read_bytes()
        assert raw[44:] == b"\x00" * 32

    @given(samples=float32_samples())
    @settings(max_examples=50, deadline=None)
    def test_float32_roundtrip_bitwise(self, samples, tmp_path_factory):
        path = tmp_path_factory.mktemp("wav") / "x.wav"
        io_mod.write_wav([samples], 8000, path, encoding="float32")
        (buf,) = io_mod.read_wav(path)
        assert np.array_equal(buf.samples, samples)

    @given(samples=float32_samples())
    @settings(max_examples=50, deadline=None)
    def test_pcm16_roundtrip_quantized(self, samples, tmp_path_factory):
        path = tmp_path_factory.mktemp("wav") / "x.wav"
        io_mod.write_wav([samples], 8000, path, encoding="pcm16")
        (buf,) = io_mod.read_wav(path)
        assert np.max(np.abs(buf.samples - samples)) <= 1.0 / 32768


class TestKeypointCsv:
    def test_read_with_t1(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("index,t0,t1\n0,0.0,0.2\n1,1.0,1.3\n")
        k = io_mod.read_keypoints(path)
        assert len(k) == 2 and k.has_t1 and k.canonical_grid

    def test_read_inference_file(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("index,t0,t1\n0,0.0,\n1,1.0,\n")
        k = io_mod.read_keypoints(path)
        assert len(k) == 2 and not k.has_t1

    def test_constraint_error_propagates(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("index,t0,t1\n0,0.0,9.9\n")
        with pytest.raises(ConstraintViolation):
            io_mod.read_keypoints(path, delta_max=5.0)

    def test_parse_error_names_line(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("index,t0,t1\n0,0.0,0.1\n1,abc,0.2\n")
        with pytest.raises(FormatError, match=":3"):
            io_mod.read_keypoints(path)

    def test_mixed_t1_rejected(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("index,t0,t1\n0,0.0,0.1\n1,1.0,\n")
        with pytest.raises(FormatError, match="some rows"):
            io_mod.read_keypoints(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("a,b,c\n0,0.0,0.1\n")
        with pytest.raises(FormatError, match="header"):
            io_mod.read_keypoints(path)

    @given(offsets=st.lists(st.floats(0.001, 4.999), min_size=1, max_size=40))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_nine_decimals(self, offsets, tmp_path_factory):
        path = tmp_path_factory.mktemp("kp") / "k.csv"
        t0 = np.arange(len(offsets), dtype=float)
        t1 = t0 + np.array(offsets)
        k = io_mod.KeypointSet(index=np.arange(len(t0)), t0=t0, t1=t1,
                               canonical_grid=True)
        io_mod.write_keypoints(k, path)
        back = io_mod.read_keypoints(path)
        assert np.max(np.abs(back.t1 - t1)) <= 1e-9
        assert np.array_equal(back.t0, t0)


class TestManifest:
    def _write_pair(self, directory, name):
        wav = directory / f"{name}.wav"
        csv = directory / f"{name}.csv"
        io_mod.write_wav([np.zeros(8)], 8000, wav)
        csv.write_text("index,t0,t1\n0,0.0,0.1\n")
        return wav, csv

    def test_roundtrip(self, tmp_path):
        w1, c1 = self._write_pair(tmp_path, "a")
        w2, c2 = self._write_pair(tmp_path, "b")
        m = io_mod.DatasetManifest("d", (
            io_mod.ManifestEntry("a", w1, c1, "train"),
            io_mod.ManifestEntry("b", w2, c2, "val"),
        ))
        io_mod.write_manifest(m, tmp_path / "m.json")
        back = io_mod.read_manifest(tmp_path / "m.json")
        assert len(back.entries) == 2
        assert back.split("train")[0].pair_id == "a"

    def test_duplicate_pair_id(self, tmp_path):
        w, c = self._write_pair(tmp_path, "a")
        m = io_mod.DatasetManifest("d", (
            io_mod.ManifestEntry("a", w, c, "train"),
            io_mod.ManifestEntry("a", w, c, "val"),
        ))
        io_mod.write_manifest(m, tmp_path / "m.json")
        with pytest.raises(FormatError, match="duplicate"):
            io_mod.read_manifest(tmp_path / "m.json")

    def test_missing_file_named(self, tmp_path):
        (tmp_path / "m.json").write_text(
            '{"dataset_name": "d", "entries": [{"pair_id": "a", '
            '"wav_path": "gone.wav", "keypoints_path": "gone.csv", '
            '"split": "train"}]}'
        )
        with pytest.raises(FormatError, match="gone.wav"):
            io_mod.read_manifest(tmp_path / "m.json")


class TestEmbeddings:
    def test_roundtrip(self, tmp_path):
        m = np.arange(12, dtype=np.float32).reshape(3, 4)
        io_mod.write_embeddings(m, tmp_path / "e.bin")
        back = io_mod.read_embeddings(tmp_path / "e.bin")
        assert np.array_equal(back, m)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "e.bin"
        path.write_bytes(b"XXXXXXXX" + struct.pack("<II", 1, 1) + b"\x00" * 4)
        with pytest.raises(FormatError, match="magic"):
            io_mod.read_embeddings(path)

    def test_size_mismatch(self, tmp_path):
        path = tmp_path / "e.bin"
        path.write_bytes(b"DRFTEMB1" + struct.pack("<II", 10, 8) + b"\x00" * 100)
        with pytest.raises(FormatError, match="size mismatch"):
            io_mod.read_embeddings(path)

    def test_zero_dim_rejected(self, tmp_path):
        path = tmp_path / "e.bin"
        path.write_bytes(b"DRFTEMB1" + struct.pack("<II", 0, 0))
        with pytest.raises(FormatError, match="dimension"):
            io_mod.read_embeddings(path)

    @given(n=st.integers(1, 12), m=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_bit_exact(self, n, m, seed, tmp_path_factory):
        path = tmp_path_factory.mktemp("emb") / "e.bin"
        rng = np.random.default_rng(seed)
        mat = rng.standard_normal((n, m)).astype(np.float32)
        mat[0, 0] = np.float32(1e-40)  # subnormal survives too
        io_mod.write_embeddings(mat, path)
        back = io_mod.read_embeddings(path)
        assert back.dtype == np.float32
        assert np.array_equal(back, mat)


class TestPredictionCsv:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("index,t0,t1_pred\n0,0.0,0.25\n1,1.0,1.25\n")
        k = io_mod.read_predictions(path)
        assert np.allclose(k.t1, [0.25, 1.25])

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("index,t0,t1\n0,0.0,0.25\n")
        with pytest.raises(FormatError, match="t1_pred"):
            io_mod.read_predictions(path)
