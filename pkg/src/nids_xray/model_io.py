"""Versioned binary model files.

Layout: magic ``NXM1``, u32 format version, u64 manifest length, a json
manifest (model kind, scalar fields, named block shapes), then the
float64 little-endian blocks in manifest order.  Scalars round-trip
exactly because json floats are written with repr precision; arrays
round-trip exactly as raw bytes.
"""

from __future__ import annotations

import json
import struct
from typing import Callable

import numpy as np

from .autoencoder import TinyAutoencoder
from .detector import EnsembleAeModel

MAGIC = b"NXM1"
FORMAT_VERSION = 1


class ModelIOError(Exception):
    pass


# kind -> (pack(model) -> (manifest_extra, blocks), unpack(manifest, blocks) -> model)
_KINDS: dict[str, tuple[Callable, Callable]] = {}


def register_kind(kind: str, pack: Callable, unpack: Callable) -> None:
    _KINDS[kind] = (pack, unpack)


def save_model(model, path: str, extra_manifest: dict | None = None) -> None:
    kind = getattr(model, "kind", None)
    if kind not in _KINDS:
        raise ModelIOError("cannot serialize model kind %r" % kind)
    pack, _ = _KINDS[kind]
    extra, named_blocks = pack(model)
    manifest = {"kind": kind, **extra, **(extra_manifest or {})}
    manifest["blocks"] = [
        {"name": name, "shape": list(arr.shape)} for name, arr in named_blocks
    ]
    raw_manifest = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(raw_manifest)))
        fh.write(raw_manifest)
        for _, arr in named_blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path: str, return_manifest: bool = False):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ModelIOError("%s: not a model file (bad magic %r)" % (path, magic))
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ModelIOError("%s: unsupported format version %d" % (path, version))
        (manifest_len,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(manifest_len).decode("utf-8"))
        kind = manifest.get("kind")
        if kind not in _KINDS:
            raise ModelIOError("%s: unknown model kind %r" % (path, kind))
        blocks = []
        for spec in manifest["blocks"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ModelIOError("%s: truncated block %r" % (path, spec["name"]))
            blocks.append(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
    _, unpack = _KINDS[kind]
    model = unpack(manifest, blocks)
    if return_manifest:
        return model, manifest
    return model


# --------------------------------------------------------------------------
# ensemble_ae


def _ae_blocks(prefix: str, ae: TinyAutoencoder):
    return [
        (prefix + ".W1", ae.W1),
        (prefix + ".b1", ae.b1),
        (prefix + ".W2", ae.W2),
        (prefix + ".b2", ae.b2),
    ]


def _ae_from_blocks(blocks: list[np.ndarray]) -> TinyAutoencoder:
    W1, b1, W2, b2 = blocks
    ae = TinyAutoencoder(W1.shape[0], W1.shape[1], np.random.default_rng(0))
    ae.W1, ae.b1, ae.W2, ae.b2 = W1, b1, W2, b2
    return ae


def _pack_ensemble(model: EnsembleAeModel):
    extra = {
        "feature_names": list(model.feature_names),
        "groups": [list(g) for g in model.groups],
        "phi": model.phi,
        "train_rows": model.train_rows,
        "params": model.params,
    }
    named = []
    for i, enc in enumerate(model.encoders):
        named.extend(_ae_blocks("enc%d" % i, enc))
    named.extend(_ae_blocks("out", model.output_ae))
    named.append(("norm_min", model.norm_min))
    named.append(("norm_max", model.norm_max))
    named.append(("out_min", model.out_min))
    named.append(("out_max", model.out_max))
    return extra, named


def _unpack_ensemble(manifest, blocks) -> EnsembleAeModel:
    groups = tuple(tuple(g) for g in manifest["groups"])
    n_enc = len(groups)
    encoders = [_ae_from_blocks(blocks[4 * i : 4 * i + 4]) for i in range(n_enc)]
    output_ae = _ae_from_blocks(blocks[4 * n_enc : 4 * n_enc + 4])
    tail = blocks[4 * n_enc + 4 :]
    norm_min, norm_max, out_min, out_max = tail
    return EnsembleAeModel(
        feature_names=tuple(manifest["feature_names"]),
        groups=groups,
        encoders=encoders,
        output_ae=output_ae,
        norm_min=norm_min,
        norm_max=norm_max,
        out_min=out_min,
        out_max=out_max,
        phi=float(manifest["phi"]),
        train_rows=int(manifest["train_rows"]),
        params=dict(manifest["params"]),
    )


register_kind("ensemble_ae", _pack_ensemble, _unpack_ensemble)
