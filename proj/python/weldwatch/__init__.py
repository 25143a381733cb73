"""Python bindings for the weldwatch condition-monitoring core."""

from ._core import (
    ConfigError,
    DataError,
    DetectorBank,
    Error,
    FitError,
    IoError,
    MlpModel,
    ParseError,
    RestoreError,
    ShapeError,
    birch_fit,
    cosine,
    default_scenario,
    detect,
    embed,
    expand_output,
    fit_detector,
    gradients,
    init_mlp,
    pca_fit,
    predict,
    predict_proba,
    purity,
    similarity,
    three_sigma_thresholds,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
