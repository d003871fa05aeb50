"""Autoencoder-ensemble anomaly detector.

Features are partitioned into correlated groups by agglomerative
clustering on 1 - |Pearson|; each group gets a small autoencoder, and a
final autoencoder maps the vector of per-group reconstruction errors to
the anomaly score.  Training is a single online pass over benign rows
with running min/max normalization that is frozen afterwards (scores on
new data use the frozen bounds, without clipping).  The alarm threshold
phi is the largest output-stage training RMSE over the calibration tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import linkage, to_tree
from scipy.spatial.distance import squareform

from .autoencoder import TinyAutoencoder
from .features.names import FEATURE_NAMES

DEFAULT_M_MAX = 10
DEFAULT_LR = 0.01
DEFAULT_HIDDEN_RATIO = 0.75
DEFAULT_CALIBRATION_FRACTION = 0.1
MIN_TRAIN_ROWS = 100


class DetectorError(Exception):
    pass


def group_features(X: np.ndarray, m_max: int = DEFAULT_M_MAX) -> tuple[tuple[int, ...], ...]:
    """Partition columns into clusters of size <= m_max.

    Average-linkage agglomerative clustering on distance 1 - |Pearson|;
    the dendrogram is walked from the root and any cluster larger than
    m_max is split into its two children.  Constant columns correlate
    with nothing and get distance 1 to everything.
    """
    if m_max < 1:
        raise DetectorError("m_max must be >= 1, got %d" % m_max)
    n, d = X.shape
    if n < 2:
        raise DetectorError("need at least 2 rows to correlate features, got %d" % n)
    if d == 1:
        return ((0,),)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(X, rowvar=False)
    corr = np.nan_to_num(corr, nan=0.0)
    dist = 1.0 - np.abs(corr)
    np.fill_diagonal(dist, 0.0)
    dist = np.clip(dist, 0.0, None)
    Z = linkage(squareform(dist, checks=False), method="average")
    root = to_tree(Z)

    groups: list[tuple[int, ...]] = []

    def walk(node):
        if node.get_count() <= m_max or node.is_leaf():
            groups.append(tuple(sorted(node.pre_order())))
        else:
            walk(node.get_left())
            walk(node.get_right())

    walk(root)
    groups.sort(key=lambda g: g[0])
    return tuple(groups)


@dataclass
class EnsembleAeModel:
    kind = "ensemble_ae"

    feature_names: tuple[str, ...]
    groups: tuple[tuple[int, ...], ...]
    encoders: list[TinyAutoencoder]
    output_ae: TinyAutoencoder
    norm_min: np.ndarray
    norm_max: np.ndarray
    out_min: np.ndarray
    out_max: np.ndarray
    phi: float
    train_rows: int
    params: dict

    def score(self, X: np.ndarray) -> np.ndarray:
        """Anomaly score per row: output-stage reconstruction RMSE."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.feature_names):
            raise DetectorError(
                "expected %d features, got %d" % (len(self.feature_names), X.shape[1])
            )
        Xn = normalize(X, self.norm_min, self.norm_max)
        R = np.empty((X.shape[0], len(self.groups)))
        for gi, (enc, group) in enumerate(zip(self.encoders, self.groups)):
            R[:, gi] = enc.rmse(Xn[:, np.asarray(group, dtype=np.intp)])
        Rn = normalize(R, self.out_min, self.out_max)
        return self.output_ae.rmse(Rn)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.score(X) > self.phi).astype(np.int8)


def normalize(X: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """(x - lo) / (hi - lo) per column; columns with hi == lo map to 0.
    No clipping: values outside the frozen bounds land outside [0, 1]."""
    span = hi - lo
    safe = np.where(span > 0.0, span, 1.0)
    out = (X - lo) / safe
    return np.where(span > 0.0, out, 0.0)


def train(
    X: np.ndarray,
    feature_names: tuple[str, ...] = FEATURE_NAMES,
    m_max: int = DEFAULT_M_MAX,
    lr: float = DEFAULT_LR,
    hidden_ratio: float = DEFAULT_HIDDEN_RATIO,
    calibration_fraction: float = DEFAULT_CALIBRATION_FRACTION,
    phi_multiplier: float = 1.0,
    seed: int = 0,
) -> EnsembleAeModel:
    """One online epoch over benign rows; returns the frozen model."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < MIN_TRAIN_ROWS:
        raise DetectorError(
            "training needs at least %d rows, got %d" % (MIN_TRAIN_ROWS, n)
        )
    if len(feature_names) != d:
        raise DetectorError("feature_names length %d != %d columns" % (len(feature_names), d))
    n_cal = max(1, int(n * calibration_fraction))

    groups = group_features(X, m_max)
    rng = np.random.default_rng(seed)
    encoders = [
        TinyAutoencoder(len(g), max(1, math.ceil(hidden_ratio * len(g))), rng)
        for g in groups
    ]
    output_ae = TinyAutoencoder(
        len(groups), max(1, math.ceil(hidden_ratio * len(groups))), rng
    )

    norm_min = np.full(d, np.inf)
    norm_max = np.full(d, -np.inf)
    out_min = np.full(len(groups), np.inf)
    out_max = np.full(len(groups), -np.inf)
    out_scores = np.empty(n)
    r = np.empty(len(groups))
    group_idx = [np.asarray(g, dtype=np.intp) for g in groups]

    for i in range(n):
        x = X[i]
        np.minimum(norm_min, x, out=norm_min)
        np.maximum(norm_max, x, out=norm_max)
        xn = normalize(x, norm_min, norm_max)
        for gi, enc in enumerate(encoders):
            r[gi] = enc.step(xn[group_idx[gi]], lr)
        np.minimum(out_min, r, out=out_min)
        np.maximum(out_max, r, out=out_max)
        rn = normalize(r, out_min, out_max)
        out_scores[i] = output_ae.step(rn, lr)

    phi = float(np.max(out_scores[n - n_cal :])) * phi_multiplier
    phi = max(phi, 1e-12)

    return EnsembleAeModel(
        feature_names=tuple(feature_names),
        groups=groups,
        encoders=encoders,
        output_ae=output_ae,
        norm_min=norm_min,
        norm_max=norm_max,
        out_min=out_min,
        out_max=out_max,
        phi=phi,
        train_rows=n,
        params={
            "m_max": m_max,
            "lr": lr,
            "hidden_ratio": hidden_ratio,
            "calibration_fraction": calibration_fraction,
            "phi_multiplier": phi_multiplier,
            "seed": seed,
        },
    )
