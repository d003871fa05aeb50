"""Streaming traffic statistics: kernels, extraction, matrix io."""

from .extract import (
    DEFAULT_BACKEND,
    FeatureError,
    FeatureMatrix,
    extract_features,
    load_binary,
    load_csv,
    make_kernel,
    save_binary,
    save_csv,
)
from .names import FEATURE_NAMES, LAMBDAS, N_FEATURES

__all__ = [
    "DEFAULT_BACKEND",
    "FEATURE_NAMES",
    "FeatureError",
    "FeatureMatrix",
    "LAMBDAS",
    "N_FEATURES",
    "extract_features",
    "load_binary",
    "load_csv",
    "make_kernel",
    "save_binary",
    "save_csv",
]
