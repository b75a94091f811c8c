import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftalign.align import (
    AlignConfig,
    ModelScorer,
    align,
    crosscorr_delay,
    generate_candidates,
    pick_best,
    predict_timestamps,
    score_candidate,
)
from driftalign.features import FeatureConfig
from driftalign.neural import ModelConfig, init_params
from driftalign.sim import SynthSpec, make_drift, synth_pair
from driftalign.types import (
    AffineCandidate,
    AudioBuffer,
    KeypointSet,
    ScoringWeights,
)


class TestGenerateCandidates:
    def test_alpha_range_from_duration(self):
        cfg = AlignConfig(sampling="random", n_candidates=500, seed=1)
        cands = generate_candidates(100.0, cfg)
        alphas = np.array([c.alpha for c in cands[:-1]])
        assert alphas.min() >= 0.95 and alphas.max() <= 1.05

    def test_grid_endpoints_included(self):
        cfg = AlignConfig(sampling="grid", grid_alpha=1, grid_beta=3)
        cands = generate_candidates(100.0, cfg)
        assert [(c.alpha, c.beta) for c in cands] == [
            (1.0, -5.0), (1.0, 0.0), (1.0, 5.0), (1.0, 0.0)]

    def test_identity_always_appended(self):
        for sampling in ("random", "grid"):
            cfg = AlignConfig(sampling=sampling, n_candidates=3,
                              grid_alpha=2, grid_beta=2, seed=9)
            cands = generate_candidates(50.0, cfg)
            assert cands[-1] == AffineCandidate(1.0, 0.0)

    def test_all_candidates_within_search_box(self):
        # brute-force check over every emitted candidate
        for seed in range(5):
            cfg = AlignConfig(sampling="random", n_candidates=200, seed=seed)
            for c in generate_candidates(60.0, cfg):
                assert abs(c.beta) <= 5.0
                assert abs(c.alpha - 1.0) <= 5.0 / 60.0
                # full-trajectory constraint at the last keypoint of a
                # 50-keypoint grid stays within delta_max + |beta| slack
                t_hat = c.alpha * 49 + c.beta
                assert abs(t_hat - 49) <= 5.0 / 60.0 * 49 + 5.0 + 1e-12

    def test_determinism(self):
        cfg = AlignConfig(sampling="random", n_candidates=50, seed=3)
        a = generate_candidates(60.0, cfg)
        b = generate_candidates(60.0, cfg)
        assert a == b


class TestPredictTimestamps:
    def test_identity(self):
        assert np.array_equal(predict_timestamps(AffineCandidate(1, 0), 3),
                              [0.0, 1.0, 2.0])

    def test_offset(self):
        assert np.array_equal(predict_timestamps(AffineCandidate(1.0, 2.0), 2),
                              [2.0, 3.0])

    def test_rate_and_offset(self):
        t = predict_timestamps(AffineCandidate(1.001, -0.5), 101)
        assert t[100] == pytest.approx(99.6)


class TestPickBest:
    def test_plain_argmax(self):
        cands = [AffineCandidate(1, 1), AffineCandidate(1, 2)]
        assert pick_best(cands, [0.1, 0.9]) == (1, 0.9)

    def test_bit_equal_tie_prefers_small_beta(self):
        cands = [AffineCandidate(1.0, 3.0), AffineCandidate(1.0, -1.0),
                 AffineCandidate(1.0, 2.0)]
        idx, _ = pick_best(cands, [0.5, 0.5, 0.5])
        assert idx == 1

    def test_beta_tie_prefers_alpha_near_one(self):
        cands = [AffineCandidate(1.04, 1.0), AffineCandidate(1.01, 1.0)]
        idx, _ = pick_best(cands, [0.5, 0.5])
        assert idx == 1

    def test_full_tie_prefers_generation_order(self):
        cands = [AffineCandidate(1.0, 1.0), AffineCandidate(1.0, 1.0)]
        idx, _ = pick_best(cands, [0.5, 0.5])
        assert idx == 0

    @given(scores=st.lists(st.integers(-640, 640).map(lambda k: k / 64.0),
                           min_size=2, max_size=30))
    @settings(max_examples=200)
    def test_argmax_invariant_under_increasing_transform(self, scores):
        # dyadic scores keep 3s + 1 exact, so ties stay ties
        cands = [AffineCandidate(1.0, 0.01 * j) for j in range(len(scores))]
        before, _ = pick_best(cands, scores)
        after, _ = pick_best(cands, [3.0 * s + 1.0 for s in scores])
        assert before == after


class TestCrosscorr:
    def test_known_delay_recovered(self):
        rng = np.random.default_rng(5)
        base = rng.standard_normal(32000)
        ch0 = AudioBuffer(base, 16000)
        ch1 = AudioBuffer(np.concatenate([np.zeros(1600), base[:-1600]]), 16000)
        for mode in ("phat", "plain"):
            d = crosscorr_delay((ch0, ch1), 1.0, mode)
            assert d == pytest.approx(0.1, abs=1 / 16000)

    def test_identical_channels_zero_delay(self):
        rng = np.random.default_rng(6)
        buf = AudioBuffer(rng.standard_normal(8000), 8000)
        assert crosscorr_delay((buf, buf), 0.5) == 0.0

    def test_independent_noise_bounded(self):
        rng = np.random.default_rng(7)
        ch0 = AudioBuffer(rng.standard_normal(16000), 8000)
        ch1 = AudioBuffer(rng.standard_normal(16000), 8000)
        d = crosscorr_delay((ch0, ch1), 0.25)
        assert np.isfinite(d) and abs(d) <= 0.25

    def test_all_zero_channel_rejected(self):
        z = AudioBuffer(np.zeros(1000), 8000)
        n = AudioBuffer(np.ones(1000), 8000)
        with pytest.raises(ValueError, match="zero"):
            crosscorr_delay((z, n), 0.1)


def small_pair(beta=1.5, seed=3):
    spec = SynthSpec(20.0, 8000, 12, "click", 30.0, seed=seed)
    drift = make_drift("affine", (1.0, beta), delta_max=5.0, duration_s=20.0)
    return synth_pair(spec, drift)


class TestAlign:
    def test_nosync_selects_identity(self):
        ch0, ch1, truth = small_pair()
        cfg = AlignConfig(sampling="grid", grid_alpha=3, grid_beta=11,
                          scorer="nosync")
        res = align((ch0, ch1), truth, cfg)
        assert res.chosen == AffineCandidate(1.0, 0.0)
        assert np.array_equal(res.predicted_t1, np.arange(12, dtype=float))

    def test_crosscorr_recovers_offset(self):
        ch0, ch1, truth = small_pair(beta=1.5)
        cfg = AlignConfig(sampling="grid", grid_alpha=1, grid_beta=101,
                          scorer="crosscorr")
        res = align((ch0, ch1), truth, cfg)
        assert res.chosen.beta == pytest.approx(1.5, abs=0.1)

    def test_non_canonical_grid_rejected(self):
        ch0, ch1, _ = small_pair()
        k = KeypointSet(index=np.arange(3), t0=np.array([0.0, 1.5, 3.0]))
        with pytest.raises(ValueError, match="canonical"):
            align((ch0, ch1), k, AlignConfig(scorer="nosync"))

    def test_model_scorer_requires_model(self):
        ch0, ch1, truth = small_pair()
        with pytest.raises(ValueError, match="model"):
            align((ch0, ch1), truth, AlignConfig(scorer="confidence"))

    def test_keep_scores_retains_candidates(self):
        ch0, ch1, truth = small_pair()
        cfg = AlignConfig(sampling="grid", grid_alpha=1, grid_beta=5,
                          scorer="crosscorr")
        res = align((ch0, ch1), truth, cfg, keep_scores=True)
        assert len(res.per_candidate_scores) == 6
        assert max(s for _, s in res.per_candidate_scores) == res.score

    def test_random_sampling_deterministic(self):
        ch0, ch1, truth = small_pair()
        cfg = AlignConfig(sampling="random", n_candidates=30, seed=11,
                          scorer="crosscorr")
        a = align((ch0, ch1), truth, cfg)
        b = align((ch0, ch1), truth, cfg)
        assert a.chosen == b.chosen and a.score == b.score


class TestWorkerPool:
    def test_thread_count_matches_single_thread_result(self, monkeypatch):
        fcfg = FeatureConfig(n_mels=8, n_fft=256, hop=256)
        mcfg = ModelConfig(embed_dim=8, n_heads=2, head_dims=(8, 4, 4),
                           input_dim=fcfg.pooled_dim, seed=0)
        scorer = ModelScorer(init_params(mcfg), mcfg, fcfg)
        ch0, ch1, truth = small_pair()
        cfg = AlignConfig(sampling="grid", grid_alpha=3, grid_beta=11,
                          scorer="confidence")
        monkeypatch.delenv("DRIFTALIGN_THREADS", raising=False)
        serial = align((ch0, ch1), truth, cfg, model=scorer, feature_cfg=fcfg)
        monkeypatch.setenv("DRIFTALIGN_THREADS", "3")
        threaded = align((ch0, ch1), truth, cfg, model=scorer,
                         feature_cfg=fcfg)
        assert serial.chosen == threaded.chosen
        assert serial.score == threaded.score


class TestScoreLocality:
    """The true candidate must outscore bad candidates on clean data."""

    def test_crosscorr_true_candidate_beats_worst(self):
        hits = 0
        for seed in range(20):
            spec = SynthSpec(20.0, 8000, 12, "click", 35.0, seed=seed)
            beta = float(np.random.default_rng(seed).uniform(-3, 3))
            drift = make_drift("affine", (1.0, beta), delta_max=5.0,
                               duration_s=20.0)
            ch0, ch1, truth = synth_pair(spec, drift)
            cfg = AlignConfig(sampling="grid", grid_alpha=1, grid_beta=41,
                              scorer="crosscorr")
            res = align((ch0, ch1), truth, cfg, keep_scores=True)
            scores = {c.beta: s for c, s in res.per_candidate_scores}
            true_score = max(s for b, s in scores.items()
                             if abs(b - beta) <= 0.25)
            hits += true_score > min(scores.values())
        assert hits >= 19  # >= 95% of seeds

    def test_trained_scorer_true_candidate_beats_worst(self, trained_model):
        params, model_cfg, feature_cfg, _, _ = trained_model
        scorer = ModelScorer(params, model_cfg, feature_cfg)
        hits = 0
        for seed in range(10):
            rng = np.random.default_rng(3000 + seed)
            beta = float(rng.uniform(-3, 3))
            spec = SynthSpec(20.0, 8000, 12, "chirp", 40.0,
                             seed=int(rng.integers(2**63)))
            drift = make_drift("affine", (1.0, beta), delta_max=5.0,
                               duration_s=20.0)
            ch0, ch1, truth = synth_pair(spec, drift)
            true_score, _ = score_candidate(
                (ch0, ch1), truth.t0, AffineCandidate(1.0, beta), scorer,
                ScoringWeights(), feature_cfg)
            worst = min(score_candidate(
                (ch0, ch1), truth.t0, AffineCandidate(1.0, b), scorer,
                ScoringWeights(), feature_cfg)[0]
                for b in (-5.0, -2.5, 2.5, 5.0) if abs(b - beta) > 1.0)
            hits += true_score > worst
        assert hits >= 10 * 0.95

    def test_identity_tops_offset_candidates_on_undrifted_pair(
            self, trained_model):
        params, model_cfg, feature_cfg, _, _ = trained_model
        scorer = ModelScorer(params, model_cfg, feature_cfg)
        spec = SynthSpec(20.0, 8000, 12, "chirp", 40.0, seed=77)
        ch0, ch1, truth = synth_pair(
            spec, make_drift("affine", (1.0, 0.0), duration_s=20.0))
        identity_score, _ = score_candidate(
            (ch0, ch1), truth.t0, AffineCandidate(1.0, 0.0), scorer,
            ScoringWeights(), feature_cfg)
        for beta in np.linspace(-5.0, 5.0, 11):
            if abs(beta) < 1.0:
                continue
            offset_score, _ = score_candidate(
                (ch0, ch1), truth.t0, AffineCandidate(1.0, float(beta)),
                scorer, ScoringWeights(), feature_cfg)
            assert identity_score >= offset_score


class TestScoreCandidate:
    def test_modes_agree_on_prediction_sets(self):
        fcfg = FeatureConfig(n_mels=8, n_fft=256, hop=256)
        mcfg = ModelConfig(embed_dim=8, n_heads=2, head_dims=(8, 4, 4),
                           input_dim=fcfg.pooled_dim, seed=0)
        scorer = ModelScorer(init_params(mcfg), mcfg, fcfg)
        ch0, ch1, truth = small_pair()
        c = AffineCandidate(1.0, 1.5)
        conf, preds_a = score_candidate((ch0, ch1), truth.t0, c, scorer,
                                        ScoringWeights(), fcfg,
                                        mode="confidence")
        binary, preds_b = score_candidate((ch0, ch1), truth.t0, c, scorer,
                                          ScoringWeights(), fcfg,
                                          mode="binary")
        assert np.array_equal(preds_a.logits, preds_b.logits)
        assert float(binary) == int(binary)
        assert 0.0 <= conf <= 1.0
