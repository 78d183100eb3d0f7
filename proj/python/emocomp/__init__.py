"""Speaker-embedding anonymization with emotion compensation.

Thin wrapper over the C++ core: Householder rotation chains, the
selection-average baseline, per-emotion SVM boundaries with latent-space
compensation, and EER/UAR evaluation on synthetic embedding worlds.
"""

from emocomp._core import (  # noqa: F401
    CompensationConfig,
    DataError,
    EerResult,
    EmotionBoundary,
    EmotionIndicator,
    EmotionLabel,
    IndicatorTrainConfig,
    NumericError,
    OrthogonalChain,
    SvmTrainConfig,
    TrainConfig,
    WorldSpec,
    __version__,
    anonymize_ohnn,
    anonymize_selection,
    anonymize_utterance_level,
    build_chain_pool,
    calibrate_alpha,
    compensate,
    compensate_pipeline,
    compute_eer,
    compute_uar,
    cosine_score,
    directional_distance,
    gen_world,
    householder_reflect,
    instance_normalize,
    map_nine_to_four,
    orthogonality_check,
    predict_emotion,
    random_chain,
    read_archive,
    run_pipeline,
    train_emotion_svm,
    train_indicator,
    train_ohnn,
    write_archive,
)
