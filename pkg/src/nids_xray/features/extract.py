"""Per-packet feature extraction and feature-matrix serialization.

The compiled kernel is used when its extension module imported cleanly;
otherwise the pure-Python twin takes over.  Both produce bit-identical
rows, so the choice only affects speed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .names import FEATURE_NAMES, N_FEATURES

try:  # pragma: no cover - exercised indirectly via make_kernel
    from . import _speedups as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

from . import _kernel_py as _python

DEFAULT_BACKEND = "compiled" if _compiled is not None else "python"

# Between eviction sweeps the kernel grows by at most this many keys;
# the cadence is keyed to the packet index so results stay deterministic.
SWEEP_INTERVAL = 8192


class FeatureError(Exception):
    pass


def make_kernel(backend: str | None = None):
    """Instantiate a statistics kernel for the requested backend
    ("compiled", "python" or None for the best available)."""
    if backend is None:
        backend = DEFAULT_BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise FeatureError("compiled kernel is not available in this build")
        return _compiled.PacketStatsKernel()
    if backend == "python":
        return _python.PacketStatsKernel()
    raise FeatureError("unknown kernel backend %r" % backend)


@dataclass
class FeatureMatrix:
    """Row-per-packet feature matrix plus labels (-1 marks unlabeled rows)."""

    X: np.ndarray
    labels: np.ndarray
    columns: tuple[str, ...] = field(default=FEATURE_NAMES)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.columns):
            raise FeatureError(
                "matrix shape %r does not match %d columns"
                % (self.X.shape, len(self.columns))
            )
        if self.labels.shape != (self.X.shape[0],):
            raise FeatureError("labels length does not match row count")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.X[:, self.columns.index(name)]
        except ValueError:
            raise FeatureError("unknown feature column %r" % name) from None


def extract_features(
    records,
    evict: bool = True,
    backend: str | None = None,
    sweep_interval: int = SWEEP_INTERVAL,
) -> FeatureMatrix:
    """Run every packet through the streaming kernel.

    Row i holds the statistics immediately after packet i was folded in,
    so each row reflects its own packet's arrival.
    """
    kernel = make_kernel(backend)
    n = len(records)
    X = np.empty((n, N_FEATURES), dtype=np.float64)
    labels = np.empty(n, dtype=np.int8)
    for i, rec in enumerate(records):
        kernel.process(
            rec.ts,
            rec.src_mac,
            rec.src_ip,
            rec.dst_ip,
            rec.src_port,
            rec.dst_port,
            rec.frame_len,
            X[i],
        )
        labels[i] = -1 if rec.label is None else rec.label
        if evict and i and i % sweep_interval == 0:
            kernel.sweep(rec.ts)
    return FeatureMatrix(X=X, labels=labels)


# --------------------------------------------------------------------------
# serialization


def _expected_header(columns) -> list[str]:
    return list(columns) + ["label"]


def save_csv(fm: FeatureMatrix, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(_expected_header(fm.columns)) + "\n")
        for i in range(fm.n_rows):
            # repr of the builtin float round-trips exactly; numpy scalar
            # repr does not parse back
            vals = [repr(float(x)) for x in fm.X[i]]
            lab = int(fm.labels[i])
            vals.append("" if lab < 0 else str(lab))
            fh.write(",".join(vals) + "\n")


def load_csv(path: str, columns: tuple[str, ...] = FEATURE_NAMES) -> FeatureMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header != _expected_header(columns):
            raise FeatureError(
                "%s: header does not match the expected %d feature columns"
                % (path, len(columns))
            )
        rows = []
        labels = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(columns) + 1:
                raise FeatureError(
                    "%s:%d: expected %d fields, got %d"
                    % (path, lineno, len(columns) + 1, len(parts))
                )
            try:
                rows.append([float(x) for x in parts[:-1]])
                labels.append(-1 if parts[-1] == "" else int(parts[-1]))
            except ValueError as exc:
                raise FeatureError("%s:%d: %s" % (path, lineno, exc)) from None
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(columns))
    return FeatureMatrix(X=X, labels=np.array(labels, dtype=np.int8), columns=tuple(columns))


def save_binary(fm: FeatureMatrix, path: str) -> None:
    """Raw little-endian float64 rows (features then label) plus a json
    sidecar naming the columns."""
    data = np.empty((fm.n_rows, len(fm.columns) + 1), dtype="<f8")
    data[:, :-1] = fm.X
    data[:, -1] = fm.labels
    with open(path, "wb") as fh:
        fh.write(data.tobytes(order="C"))
    sidecar = {
        "rows": int(fm.n_rows),
        "columns": _expected_header(fm.columns),
        "dtype": "float64",
        "byteorder": "little",
        "layout": "row-major",
    }
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_binary(path: str) -> FeatureMatrix:
    if not os.path.exists(path):
        raise FeatureError("no such file: %s" % path)
    meta_path = path + ".meta.json"
    if not os.path.exists(meta_path):
        raise FeatureError("missing sidecar %s" % meta_path)
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    cols = meta["columns"]
    if not cols or cols[-1] != "label":
        raise FeatureError("%s: sidecar must end with the label column" % meta_path)
    n = meta["rows"]
    width = len(cols)
    nbytes = os.path.getsize(path)
    if nbytes != n * width * 8:
        raise FeatureError(
            "%s: expected %d bytes (%d float64 values), found %d"
            % (path, n * width * 8, n * width, nbytes)
        )
    raw = np.fromfile(path, dtype="<f8")
    data = raw.reshape(n, width)
    return FeatureMatrix(
        X=data[:, :-1].copy(),
        labels=data[:, -1].astype(np.int8),
        columns=tuple(cols[:-1]),
    )
