"""Command-line entry point: simulate, train, align, evaluate, ablate, explain.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every command is
deterministic for a fixed --seed; all randomness flows from one seeded
generator per invocation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluate as eval_mod
from . import io as io_mod
from . import neural, sim
from .align import (
    SCORER_KINDS,
    AlignConfig,
    ModelScorer,
    align as run_alignment,
    score_candidate,
)
from .features import FeatureConfig
from .scoring import confidence_score
from .types import (
    DELTA_MAX_DEFAULT,
    AffineCandidate,
    ConstraintViolation,
    DriftAlignError,
    PredictionSet,
    ScoringWeights,
)


def _parse_drift(text: str, rng, duration: float, delta_max: float):
    """Parse --drift specs: affine:A,B | affine:random | piecewise:K."""
    kind, _, arg = text.partition(":")
    if kind == "affine":
        if arg == "random":
            beta = rng.uniform(-0.6 * delta_max, 0.6 * delta_max)
            margin = (delta_max - abs(beta)) / duration
            alpha = 1.0 + rng.uniform(-0.9 * margin, 0.9 * margin)
        else:
            alpha, beta = (float(v) for v in arg.split(","))
        return sim.make_drift("affine", (alpha, beta), delta_max=delta_max,
                              duration_s=duration)
    if kind == "piecewise":
        n_knots = int(arg)
        seed = int(rng.integers(0, 2**63))
        return sim.make_drift("piecewise_linear", (n_knots, duration),
                              seed=seed, delta_max=delta_max)
    raise ValueError(f"unknown drift spec {text!r}")


def _parse_weights(text: str) -> ScoringWeights:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise ValueError("--weights needs 4 comma-separated values")
    return ScoringWeights(*parts)


def _parse_candidates(text: str, cfg_seed: int, delta_max: float,
                      scorer: str = "confidence",
                      crosscorr_mode: str = "phat") -> AlignConfig:
    if text.startswith("grid:"):
        ga, _, gb = text[5:].partition("x")
        return AlignConfig(sampling="grid", grid_alpha=int(ga),
                           grid_beta=int(gb), seed=cfg_seed,
                           delta_max=delta_max, scorer=scorer,
                           crosscorr_mode=crosscorr_mode)
    return AlignConfig(sampling="random", n_candidates=int(text),
                       seed=cfg_seed, delta_max=delta_max,
                       scorer=scorer, crosscorr_mode=crosscorr_mode)


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    entries = []
    for j in range(args.n_pairs):
        spec = sim.SynthSpec(
            duration_s=args.duration,
            sample_rate_hz=args.sample_rate,
            n_keypoints=args.n_keypoints,
            event_kind=args.event,
            event_snr_db=args.snr_db,
            seed=int(rng.integers(0, 2**63)),
        )
        try:
            drift = _parse_drift(args.drift, rng, args.duration, args.delta_max)
        except ConstraintViolation as e:
            # a drift the flags cannot express is a usage problem
            print(f"invalid --drift: {e}", file=sys.stderr)
            return 2
        ch0, ch1, truth = sim.synth_pair(spec, drift)
        pair_id = f"pair_{j:03d}"
        wav_path = out / f"{pair_id}.wav"
        kp_path = out / f"{pair_id}.csv"
        io_mod.write_wav([ch0, ch1], spec.sample_rate_hz, wav_path,
                         encoding=args.encoding)
        io_mod.write_keypoints(truth, kp_path)
        split = "val" if j >= args.n_pairs - args.val_pairs else "train"
        entries.append(io_mod.ManifestEntry(pair_id, wav_path, kp_path, split))
    manifest = io_mod.DatasetManifest(args.name, tuple(entries))
    io_mod.write_manifest(manifest, out / "manifest.json")
    print(f"wrote {args.n_pairs} pairs to {out}")
    return 0


def cmd_train(args) -> int:
    manifest = io_mod.read_manifest(args.manifest)
    feature_cfg = FeatureConfig(n_mels=args.n_mels, n_fft=args.n_fft,
                                hop=args.hop)
    head_dims = tuple(int(v) for v in args.head_dims.split(","))
    model_cfg = neural.ModelConfig(
        embed_dim=args.embed_dim,
        n_heads=args.heads,
        head_dims=head_dims,
        input_dim=feature_cfg.pooled_dim,
        seed=args.seed,
        use_attention=not args.no_attention,
        mlp_kind=args.mlp,
    )
    train_cfg = neural.TrainConfig(
        lr=args.lr,
        weight_decay=args.weight_decay,
        batch_size=args.batch,
        max_epochs=args.max_epochs,
        early_stop_patience=args.patience,
        plateau_factor=args.plateau_factor,
        plateau_patience=args.plateau_patience,
        augment_prob=args.augment_prob,
        keypoint_stride=args.stride,
        seed=args.seed,
    )
    try:
        params, log = neural.train(manifest, model_cfg, train_cfg, feature_cfg)
    except FloatingPointError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return 1
    neural.save_model(params, model_cfg, args.out)
    log_path = args.log or str(Path(args.out).with_suffix(".log.csv"))
    neural.write_training_log(log, log_path)
    print(f"trained {len(log)} epochs, best val loss "
          f"{min(r.val_loss for r in log):.6f}; model at {args.out}")
    return 0


def _breakdown_entry(preds: PredictionSet, weights: ScoringWeights) -> dict:
    b = confidence_score(preds, weights)
    return {
        "alpha": preds.candidate.alpha,
        "beta": preds.candidate.beta,
        "breakdown": b.to_dict(),
    }


def cmd_align(args) -> int:
    channels = io_mod.read_wav(args.pair)
    if len(channels) != 2:
        print(f"{args.pair}: need a stereo file", file=sys.stderr)
        return 1
    keypoints = io_mod.read_keypoints(args.keypoints, args.delta_max)
    cfg = _parse_candidates(args.candidates, args.seed, args.delta_max,
                            scorer=args.scorer,
                            crosscorr_mode=args.crosscorr_mode)
    weights = _parse_weights(args.weights)

    scorer = None
    feature_cfg = FeatureConfig()
    if args.scorer in ("confidence", "binary"):
        if not args.model:
            print("--model is required for model-based scorers", file=sys.stderr)
            return 2
        try:
            params, model_cfg = neural.load_model(args.model)
        except (OSError, DriftAlignError) as e:
            print(f"cannot load model: {e}", file=sys.stderr)
            return 1
        n_mels = model_cfg.input_dim // 2
        feature_cfg = FeatureConfig(n_mels=n_mels, n_fft=args.n_fft,
                                    hop=args.hop)
        scorer = ModelScorer(params, model_cfg, feature_cfg)

    result = run_alignment(
        (channels[0], channels[1]), keypoints, cfg, model=scorer,
        weights=weights, feature_cfg=feature_cfg, keep_scores=args.explain)

    out_csv = Path(args.out)
    lines = ["index,t0,t1_pred"]
    for j in range(len(keypoints)):
        lines.append(f"{int(keypoints.index[j])},{keypoints.t0[j]:.9f},"
                     f"{result.predicted_t1[j]:.9f}")
    out_csv.write_text("\n".join(lines) + "\n")

    sidecar = {
        "alpha": result.chosen.alpha,
        "beta": result.chosen.beta,
        "score": result.score,
        "scorer": args.scorer,
    }
    if args.explain and args.scorer in ("confidence", "binary"):
        ranked = sorted(result.per_candidate_scores, key=lambda cs: -cs[1])[:5]
        explain = []
        for cand, score in ranked:
            _, preds = score_candidate(
                (channels[0], channels[1]), keypoints.t0, cand, scorer,
                weights, feature_cfg, mode=args.scorer)
            entry = _breakdown_entry(preds, weights)
            entry["score"] = score
            explain.append(entry)
        sidecar["top_candidates"] = explain
    Path(args.out).with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2) + "\n")
    print(f"chosen alpha={result.chosen.alpha:.6f} beta={result.chosen.beta:.6f} "
          f"score={result.score:.6f}")
    return 0


def cmd_evaluate(args) -> int:
    if len(args.pred) != len(args.truth) or len(args.pred2) != len(args.truth2):
        print("--pred/--truth counts must match per dataset", file=sys.stderr)
        return 2

    def dataset_report(preds, truths):
        per_file = {}
        for p, t in zip(preds, truths):
            pred_k = io_mod.read_predictions(p)
            truth_k = io_mod.read_keypoints(t, delta_max=float("inf"))
            per_file[Path(p).name] = eval_mod.evaluate_predictions(pred_k, truth_k)
        return eval_mod.dataset_score(per_file)

    try:
        report = dataset_report(args.pred, args.truth)
        if args.pred2:
            report2 = dataset_report(args.pred2, args.truth2)
            merged = eval_mod.combine(report, report2)
            print(f"dataset_1_mse {report.dataset_mse:.9f}")
            print(f"dataset_2_mse {report2.dataset_mse:.9f}")
            print(f"combined_mse {merged.combined:.9f}")
            doc = {
                "dataset_1": {"per_file_mse": report.per_file_mse,
                              "mse": report.dataset_mse},
                "dataset_2": {"per_file_mse": report2.per_file_mse,
                              "mse": report2.dataset_mse},
                "combined_mse": merged.combined,
            }
        else:
            print(f"dataset_mse {report.dataset_mse:.9f}")
            doc = {"per_file_mse": report.per_file_mse,
                   "mse": report.dataset_mse}
    except (ValueError, DriftAlignError) as e:
        print(f"evaluation failed: {e}", file=sys.stderr)
        return 1
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    return 0


def cmd_ablate(args) -> int:
    manifest = io_mod.read_manifest(args.manifest)
    feature_cfg = FeatureConfig(n_mels=args.n_mels, n_fft=args.n_fft,
                                hop=args.hop)
    align_cfg = _parse_candidates(args.candidates, args.seed, args.delta_max)

    if args.mode == "weights":
        if not args.model:
            print("--model is required for weight ablation", file=sys.stderr)
            return 2
        params, model_cfg = neural.load_model(args.model)
        feature_cfg = FeatureConfig(n_mels=model_cfg.input_dim // 2,
                                    n_fft=args.n_fft, hop=args.hop)
        scorer = ModelScorer(params, model_cfg, feature_cfg)
        rows = eval_mod.ablate_weights(manifest, scorer, align_cfg,
                                       split=args.split)
    else:
        head_dims = tuple(int(v) for v in args.head_dims.split(","))
        model_cfg = neural.ModelConfig(
            embed_dim=args.embed_dim, n_heads=args.heads,
            head_dims=head_dims, input_dim=feature_cfg.pooled_dim,
            seed=args.seed)
        train_cfg = neural.TrainConfig(max_epochs=args.train_epochs,
                                       keypoint_stride=args.stride,
                                       seed=args.seed)
        rows = eval_mod.ablate_components(manifest, model_cfg, train_cfg,
                                          align_cfg, feature_cfg,
                                          split=args.split)

    csv_text = eval_mod.ablation_csv(rows)
    if args.out:
        Path(args.out).write_text(csv_text)
    print(csv_text, end="")
    return 0


def cmd_explain(args) -> int:
    weights = _parse_weights(args.weights)
    if args.probs:
        probs = np.array([float(v) for v in args.probs.split(",")])
        if np.any((probs < 0) | (probs > 1)):
            print("probabilities must lie in [0, 1]", file=sys.stderr)
            return 2
        breakdown = confidence_score(probs, weights)
    else:
        logits = np.array([float(v) for v in args.logits.split(",")])
        preds = PredictionSet.from_logits(logits, AffineCandidate(1.0, 0.0))
        breakdown = confidence_score(preds, weights)
    print(json.dumps(breakdown.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftalign",
        description="Align clock-drifted stereo audio with confidence-weighted "
                    "candidate scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, **kw):
        return sub.add_parser(
            name, formatter_class=argparse.ArgumentDefaultsHelpFormatter, **kw)

    p = add_parser("simulate", help="generate synthetic drifted pairs")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-pairs", type=int, default=1, help="pairs to generate")
    p.add_argument("--duration", type=float, default=60.0, help="seconds per pair")
    p.add_argument("--n-keypoints", type=int, default=50, help="keypoints per pair")
    p.add_argument("--sample-rate", type=int, default=8000, help="sample rate in Hz")
    p.add_argument("--event", choices=("click", "chirp"), default="chirp", help="event family")
    p.add_argument("--snr-db", type=float, default=30.0,
                   help="event-to-noise ratio in dB (inf for no noise)")
    p.add_argument("--drift", default="affine:1.0,0.0",
                   help="affine:A,B | affine:random | piecewise:KNOTS")
    p.add_argument("--delta-max", type=float, default=DELTA_MAX_DEFAULT, help="drift bound in seconds")
    p.add_argument("--val-pairs", type=int, default=0,
                   help="how many trailing pairs get the val split")
    p.add_argument("--encoding", choices=("float32", "pcm16"), default="float32", help="WAV sample encoding")
    p.add_argument("--name", default="synthetic", help="dataset name")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.set_defaults(fn=cmd_simulate)

    p = add_parser("train", help="train the alignment scorer")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--lr", type=float, default=2e-4, help="learning rate")
    p.add_argument("--weight-decay", type=float, default=0.01,
                   help="decoupled weight decay")
    p.add_argument("--batch", type=int, default=32, help="batch size")
    p.add_argument("--max-epochs", type=int, default=100,
                   help="epoch budget")
    p.add_argument("--patience", type=int, default=25,
                   help="early-stopping patience in epochs")
    p.add_argument("--plateau-factor", type=float, default=0.7,
                   help="multiply lr by this on a validation plateau")
    p.add_argument("--plateau-patience", type=int, default=3,
                   help="plateau epochs before the lr drops")
    p.add_argument("--augment-prob", type=float, default=0.3,
                   help="fraction of training samples augmented")
    p.add_argument("--stride", type=int, default=20,
                   help="use every stride-th keypoint for training")
    p.add_argument("--embed-dim", type=int, default=64,
                   help="channel embedding width")
    p.add_argument("--heads", type=int, default=4, help="attention heads")
    p.add_argument("--head-dims", default="64,32,16",
                   help="MLP hidden layer sizes")
    p.add_argument("--n-mels", type=int, default=40, help="mel bands")
    p.add_argument("--n-fft", type=int, default=400, help="FFT size")
    p.add_argument("--hop", type=int, default=160, help="frame hop")
    p.add_argument("--no-attention", action="store_true",
                   help="bypass the cross-attention block")
    p.add_argument("--mlp", choices=("enhanced", "plain"), default="enhanced",
                   help="scorer head variant")
    p.add_argument("--log", help="training log CSV path")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.set_defaults(fn=cmd_train)

    p = add_parser("align", help="align one stereo pair")
    p.add_argument("--pair", required=True, help="stereo WAV")
    p.add_argument("--keypoints", required=True, help="keypoint CSV (t1 may be empty)")
    p.add_argument("--model", help="model checkpoint path")
    p.add_argument("--scorer", choices=SCORER_KINDS,
                   default="confidence", help="candidate scoring backend")
    p.add_argument("--candidates", default="100",
                   help="M random candidates or grid:GAxGB")
    p.add_argument("--weights", default="0.4,0.3,0.2,0.1",
                   help="confidence component weights")
    p.add_argument("--delta-max", type=float, default=DELTA_MAX_DEFAULT, help="drift bound in seconds")
    p.add_argument("--crosscorr-mode", choices=("phat", "plain"), default="phat", help="cross-spectrum weighting")
    p.add_argument("--n-fft", type=int, default=400, help="FFT size")
    p.add_argument("--hop", type=int, default=160, help="frame hop")
    p.add_argument("--out", required=True, help="prediction CSV path")
    p.add_argument("--explain", action="store_true",
                   help="include top-5 candidate breakdowns in the sidecar")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.set_defaults(fn=cmd_align)

    p = add_parser("evaluate", help="MSE between prediction and truth CSVs")
    p.add_argument("--pred", action="append", required=True, help="prediction CSV (repeatable)")
    p.add_argument("--truth", action="append", required=True, help="ground-truth CSV (repeatable)")
    p.add_argument("--pred2", action="append", default=[],
                   help="second dataset predictions (enables combined score)")
    p.add_argument("--truth2", action="append", default=[], help="second dataset ground truth")
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(fn=cmd_evaluate)

    p = add_parser("ablate", help="weight / component ablation harness")
    p.add_argument("--mode", choices=("weights", "components"), required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", help="trained checkpoint (weights mode)")
    p.add_argument("--candidates", default="grid:11x101", help="M random candidates or grid:GAxGB")
    p.add_argument("--split", default="val", help="manifest split to evaluate")
    p.add_argument("--delta-max", type=float, default=DELTA_MAX_DEFAULT, help="drift bound in seconds")
    p.add_argument("--train-epochs", type=int, default=30,
                   help="epochs per architecture in components mode")
    p.add_argument("--stride", type=int, default=1, help="training keypoint stride")
    p.add_argument("--embed-dim", type=int, default=32, help="channel embedding width")
    p.add_argument("--heads", type=int, default=4, help="attention heads")
    p.add_argument("--head-dims", default="32,16,8", help="MLP hidden layer sizes")
    p.add_argument("--n-mels", type=int, default=24, help="mel bands")
    p.add_argument("--n-fft", type=int, default=256, help="FFT size")
    p.add_argument("--hop", type=int, default=256, help="frame hop")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.set_defaults(fn=cmd_ablate)

    p = add_parser("explain", help="confidence-score breakdown for predictions")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--probs", help="comma-separated probabilities")
    group.add_argument("--logits", help="comma-separated raw logits")
    p.add_argument("--weights", default="0.4,0.3,0.2,0.1", help="confidence component weights")
    p.set_defaults(fn=cmd_explain)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DriftAlignError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"invalid arguments: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
