"""Quality-aware JPEG restoration: a residual U-Net whose skip-connection
gates double as unsupervised local quality maps."""

from .errors import (
    CheckpointError,
    CheckpointShapeError,
    CheckpointVersionError,
    CodecError,
    ConfigurationError,
    DimensionError,
    InputError,
    ManifestError,
    ParseError,
    QarestError,
    TrainingDivergedError,
    UndefinedCorrelationError,
    ValidationError,
)
from .model import ModelConfig, RestorationNet, RestorationOutput, build_model
from .objective import LossReport, SsimParams, l1_loss, ssim_index, total_loss
from .metrics import (
    CorrelationReport,
    PoolingSpec,
    QualityEstimate,
    correlation_report,
    kendall,
    minkowski_pool,
    mse,
    pearson,
    psnr,
    psnr_b,
    spearman,
    ssim_eval,
)
from .dataio import (
    CorpusManifest,
    DistortionSpec,
    MosDatabase,
    MosRecord,
    PatchSampler,
    PatchSpec,
    build_corpus_manifest,
    distort_jpeg,
    load_image,
    load_mos_manifest,
    save_image,
    save_mos_manifest,
)
from .trainer import (
    LoggingConfig,
    OptimizerConfig,
    RunConfig,
    TrainState,
    fit,
    load_checkpoint,
    load_model,
    lr_at_step,
    save_checkpoint,
    train_step,
)
from .bench import (
    IqaReport,
    RestorationReport,
    emit_reports,
    eval_iqa,
    eval_restoration,
    predict_quality,
    restore_image,
)

__version__ = "0.1.0"
