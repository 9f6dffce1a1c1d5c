"""Expectation-driven keyframe selection for video question answering.

The pipeline: sample a few anchor frames, predict the full latent sequence
from them, measure where reality disagrees with the prediction, and hand
the most surprising frames to the answering model.
"""

from .errors import (
    ConfigError,
    CorruptEntry,
    DecoderUnavailable,
    EmptySequence,
    FingerprintMismatch,
    InfeasibleConfig,
    InvalidCount,
    InvalidDimensions,
    InvalidFps,
    IoError,
    ItemMismatch,
    LengthMismatch,
    MissingPath,
    MissingPlaceholder,
    NonFiniteInput,
    NotEnoughEligible,
    OptionOutOfRange,
    RateLimited,
    RemoteProtocolError,
    RemoteUnavailable,
    SchemaViolation,
    ShapeMismatch,
    TaskFailed,
    TemplateArityMismatch,
    TransportError,
    Unauthorized,
    Unparseable,
    UnreadableFrame,
    VapError,
)
from .ingest import (
    Frame,
    IndexSet,
    VideoClip,
    fps_sample,
    load_frame_sequence,
    resize_clip,
    shift_sample,
    uniform_sample,
)
from .latents import (
    CacheKey,
    EncoderConfig,
    LatentFrame,
    LatentSequence,
    MemoryBank,
    encode_clip,
    upsample_to_length,
)
from .prior import (
    PredictorConfig,
    PredictorRequest,
    predict_full,
    recursive_interpolate,
    remote_predict,
    ssim,
)
from .select import (
    SelectionResult,
    SimilarityProfile,
    cosine_similarity,
    latent_perceptual_distance,
    score_frames,
    select_least_surprising,
    select_most_surprising,
    select_random,
    select_uniform,
)
from .vlmclient import (
    Blocked,
    ChatRequest,
    ParsedAnswer,
    PromptTemplate,
    TEMPLATES,
    complete,
    mock_oracle,
    parse_answer,
    render_prompt,
)
from .evalharness import (
    LatencyMeasurement,
    QAItem,
    ResultRecord,
    RunReport,
    compare_runs,
    evaluate_run,
    load_dataset,
    measure_latency,
    score_multi_select,
)
from .synthworld import (
    SurpriseAnnotation,
    SurpriseWindow,
    WorldConfig,
    empirical_random_recall,
    generate_corpus,
    generate_video,
    iter_corpus,
    surprise_recall,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
