"""driftalign: confidence-weighted alignment of clock-drifted stereo audio."""

from .align import (
    AlignConfig,
    ModelScorer,
    align,
    crosscorr_delay,
    generate_candidates,
    predict_timestamps,
    score_candidate,
)
from .evaluate import combined_score, dataset_score, mse
from .features import FeatureConfig, Segment, extract_segment, log_mel, pool_features
from .neural import (
    AugSample,
    ModelConfig,
    ModelParams,
    TrainConfig,
    augment,
    forward,
    init_params,
    load_model,
    loss_and_grads,
    sample_training_pairs,
    save_model,
    train,
)
from .scoring import (
    ScoreBreakdown,
    binary_count_score,
    confidence_score,
    combine_components,
)
from .sim import SynthSpec, apply_drift, make_drift, synth_base_signal, synth_pair
from .types import (
    DELTA_MAX_DEFAULT,
    AffineCandidate,
    AlignmentResult,
    AudioBuffer,
    ConstraintViolation,
    DriftAlignError,
    DriftTrace,
    EvalReport,
    FormatError,
    GridViolation,
    KeypointSet,
    PredictionSet,
    ScoringWeights,
    logistic,
    validate_keypoints,
)

__version__ = "0.1.0"
