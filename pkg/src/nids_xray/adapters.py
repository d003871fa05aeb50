"""Uniform adapter over detector implementations.

Every detector the bench can interrogate is wrapped in a
:class:`ModelAdapter`: a name, the expected feature columns, a
vectorized ``score`` and a threshold-based ``predict``.  New detectors
plug in by registering a trainer callable under a model name.

Two trainers ship built in:

* ``reference``: the autoencoder-ensemble detector.
* ``rate_blind``: a deliberately rate-insensitive toy, scoring rows by
  the z-score of one damped mean-size column.  Damped means are ratios
  of damped sums, so stretching a stream in time barely moves them;
  this model anchors the timestamp-tampering comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import model_io
from .detector import MIN_TRAIN_ROWS, train as train_ensemble
from .features.extract import FeatureMatrix

DEFAULT_RATE_BLIND_COLUMN = "MI_dir_1_mean"


class AdapterError(Exception):
    pass


def _as_matrix(X, feature_names) -> np.ndarray:
    if isinstance(X, FeatureMatrix):
        if X.columns != tuple(feature_names):
            raise AdapterError("feature matrix columns do not match the model")
        return X.X
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != len(feature_names):
        raise AdapterError(
            "expected %d feature columns, got %d" % (len(feature_names), X.shape[1])
        )
    return X


@dataclass(frozen=True)
class ModelAdapter:
    name: str
    model: object

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(self.model.feature_names)

    @property
    def threshold(self) -> float:
        return float(self.model.phi)

    def score(self, X) -> np.ndarray:
        return np.asarray(self.model.score(_as_matrix(X, self.feature_names)))

    def predict(self, X) -> np.ndarray:
        return (self.score(X) > self.threshold).astype(np.int8)


# --------------------------------------------------------------------------
# rate-blind toy detector


@dataclass
class ColumnZscoreModel:
    kind = "column_zscore"

    feature_names: tuple[str, ...]
    column: str
    mean: float
    std: float
    phi: float
    train_rows: int

    def __post_init__(self):
        if self.column not in self.feature_names:
            raise AdapterError("unknown column %r" % self.column)
        self._idx = self.feature_names.index(self.column)

    def score(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        sd = self.std if self.std > 0.0 else 1.0
        return np.abs(X[:, self._idx] - self.mean) / sd

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.score(X) > self.phi).astype(np.int8)


def _pack_column_zscore(model: ColumnZscoreModel):
    extra = {
        "feature_names": list(model.feature_names),
        "column": model.column,
        "mean": model.mean,
        "std": model.std,
        "phi": model.phi,
        "train_rows": model.train_rows,
    }
    return extra, []


def _unpack_column_zscore(manifest, blocks):
    return ColumnZscoreModel(
        feature_names=tuple(manifest["feature_names"]),
        column=manifest["column"],
        mean=float(manifest["mean"]),
        std=float(manifest["std"]),
        phi=float(manifest["phi"]),
        train_rows=int(manifest["train_rows"]),
    )


model_io.register_kind("column_zscore", _pack_column_zscore, _unpack_column_zscore)


# --------------------------------------------------------------------------
# trainer registry


_TRAINERS: dict[str, Callable] = {}


def register_trainer(name: str):
    def deco(fn):
        _TRAINERS[name] = fn
        return fn

    return deco


def available_models() -> tuple[str, ...]:
    return tuple(sorted(_TRAINERS))


def _check_training_slice(features: FeatureMatrix, train_rows: int) -> None:
    if not 0 < train_rows <= features.n_rows:
        raise AdapterError(
            "training slice 0:%d is outside the %d-row matrix"
            % (train_rows, features.n_rows)
        )
    if train_rows < MIN_TRAIN_ROWS:
        raise AdapterError(
            "training needs at least %d rows, got %d" % (MIN_TRAIN_ROWS, train_rows)
        )
    if np.any(features.labels[:train_rows] == 1):
        raise AdapterError("training slice contains rows labeled malicious")


@register_trainer("reference")
def train_reference(
    features: FeatureMatrix,
    train_rows: int,
    seed: int = 0,
    m_max: int = 10,
    lr: float = 0.01,
    hidden_ratio: float = 0.75,
    calibration_fraction: float = 0.1,
    phi_multiplier: float = 1.0,
) -> ModelAdapter:
    _check_training_slice(features, train_rows)
    model = train_ensemble(
        features.X[:train_rows],
        feature_names=features.columns,
        m_max=m_max,
        lr=lr,
        hidden_ratio=hidden_ratio,
        calibration_fraction=calibration_fraction,
        phi_multiplier=phi_multiplier,
        seed=seed,
    )
    return ModelAdapter(name="reference", model=model)


@register_trainer("rate_blind")
def train_rate_blind(
    features: FeatureMatrix,
    train_rows: int,
    seed: int = 0,
    column: str = DEFAULT_RATE_BLIND_COLUMN,
    calibration_fraction: float = 0.1,
    phi_multiplier: float = 1.0,
) -> ModelAdapter:
    _check_training_slice(features, train_rows)
    if column not in features.columns:
        raise AdapterError("unknown column %r" % column)
    col = features.X[:train_rows, features.columns.index(column)]
    mean = float(np.mean(col))
    std = float(np.std(col))
    model = ColumnZscoreModel(
        feature_names=features.columns,
        column=column,
        mean=mean,
        std=std,
        phi=1.0,
        train_rows=train_rows,
    )
    n_cal = max(1, int(train_rows * calibration_fraction))
    cal_scores = model.score(features.X[train_rows - n_cal : train_rows])
    model.phi = max(float(np.max(cal_scores)) * phi_multiplier, 1e-12)
    return ModelAdapter(name="rate_blind", model=model)


def train_adapter(name: str, features: FeatureMatrix, train_rows: int, seed: int = 0, **params) -> ModelAdapter:
    if name not in _TRAINERS:
        raise AdapterError(
            "unknown model %r (available: %s)" % (name, ", ".join(available_models()))
        )
    return _TRAINERS[name](features, train_rows, seed=seed, **params)


def save_adapter(adapter: ModelAdapter, path: str) -> None:
    model_io.save_model(adapter.model, path, extra_manifest={"adapter_name": adapter.name})


def load_adapter(path: str) -> ModelAdapter:
    model, manifest = model_io.load_model(path, return_manifest=True)
    return ModelAdapter(name=manifest.get("adapter_name", manifest["kind"]), model=model)
