"""End-to-end orchestration: trace in, comparative report out.

Stages (ingest, extract, tamper, then per model: train, eval, distill,
prune, shap, agree, bias, and finally report) communicate only through
files in the output directory.  Each stage records a stamp with hashes
of its inputs, parameters and outputs; a rerun skips stages whose
stamps still match, so interrupted runs resume where they stopped.

The machine report (report.json) is assembled purely from stage
artifacts with sorted keys, no timestamps and relative paths, so two
runs with the same inputs and config produce byte-identical reports.
The human text report is rendered from the machine report.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .adapters import load_adapter, save_adapter, train_adapter
from .agreement import agreement
from .config import Config
from .features.extract import extract_features, load_binary, save_binary
from .metrics import evaluate
from .packets import LabelSpec, read_trace, write_trace
from .shapley import explain, summarize
from .surrogate import SurrogateTree, distill, fidelity, top_k_prune
from .tamper import (
    TamperError,
    bias_compare,
    default_train_rows,
    parse_match,
    tamper,
)


class PipelineError(Exception):
    pass


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _dump_json(obj, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


class _StageRunner:
    """Stamp-based skip logic around stage callables."""

    def __init__(self, out_dir: str, force: bool = False):
        self.out_dir = out_dir
        self.force = force
        self.stamp_dir = os.path.join(out_dir, ".stamps")
        os.makedirs(self.stamp_dir, exist_ok=True)
        self.executed: list[str] = []
        self.skipped: list[str] = []

    def _rel(self, path: str) -> str:
        try:
            return os.path.relpath(path, self.out_dir)
        except ValueError:
            return path

    def _hash_all(self, paths) -> dict | None:
        out = {}
        for p in paths:
            if not os.path.exists(p):
                return None
            out[self._rel(p)] = _sha256(p)
        return out

    def run(self, name: str, inputs: list[str], outputs: list[str], params: dict, fn) -> None:
        stamp_path = os.path.join(self.stamp_dir, name.replace(":", ".") + ".json")
        params_norm = json.loads(json.dumps(_jsonable(params), sort_keys=True))
        if not self.force and os.path.exists(stamp_path):
            try:
                stamp = _load_json(stamp_path)
            except (OSError, json.JSONDecodeError):
                stamp = None
            if stamp is not None and stamp.get("params") == params_norm:
                in_hashes = self._hash_all(inputs)
                out_hashes = self._hash_all(outputs)
                if (
                    in_hashes is not None
                    and out_hashes is not None
                    and stamp.get("inputs") == in_hashes
                    and stamp.get("outputs") == out_hashes
                ):
                    self.skipped.append(name)
                    return
        fn()
        in_hashes = self._hash_all(inputs)
        out_hashes = self._hash_all(outputs)
        if out_hashes is None:
            raise PipelineError("stage %s did not produce its outputs" % name)
        _dump_json(
            {"inputs": in_hashes, "outputs": out_hashes, "params": params_norm},
            stamp_path,
        )
        self.executed.append(name)


@dataclass
class PipelineResult:
    report: dict
    exit_code: int
    out_dir: str
    executed: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)


def _model_params(cfg: Config, name: str) -> dict:
    if name == "reference":
        return {
            "m_max": cfg["train.m_max"],
            "lr": cfg["train.lr"],
            "hidden_ratio": cfg["train.hidden_ratio"],
            "calibration_fraction": cfg["train.calibration_fraction"],
            "phi_multiplier": cfg["train.phi_multiplier"],
        }
    if name == "rate_blind":
        return {
            "column": cfg["rate_blind.column"],
            "calibration_fraction": cfg["train.calibration_fraction"],
            "phi_multiplier": cfg["train.phi_multiplier"],
        }
    return {}


def _resolve_train_rows(cfg: Config, records) -> int:
    if cfg["train.rows"] is not None:
        return cfg["train.rows"]
    match = parse_match(cfg["tamper.match"])
    try:
        return default_train_rows(records, match)
    except TamperError:
        pass
    labels = [r.label for r in records]
    if 1 in labels:
        n = labels.index(1)
        if n > 0:
            return n
    raise PipelineError(
        "cannot infer training rows: no packet matches %r and no labeled "
        "malicious packet exists; set train.rows" % cfg["tamper.match"]
    )


def run_pipeline(
    trace_path: str,
    out_dir: str,
    cfg: Config,
    labels: str | None = None,
    force: bool = False,
) -> PipelineResult:
    os.makedirs(out_dir, exist_ok=True)
    runner = _StageRunner(out_dir, force=force)
    seed = cfg["seed"]
    models = list(cfg["models"])
    bands = list(cfg["tamper.bands"])
    match_text = cfg["tamper.match"]

    def path(*parts: str) -> str:
        return os.path.join(out_dir, *parts)

    trace_csv = path("trace.csv")
    trace_meta = path("trace_meta.json")
    features_bin = path("features.bin")
    features_meta = features_bin + ".meta.json"
    label_text = labels if labels is not None else cfg["ingest.labels"]

    # ---- ingest ----------------------------------------------------------
    def do_ingest():
        spec = LabelSpec.parse(label_text) if label_text else None
        records, meta = read_trace(trace_path, label_spec=spec)
        write_trace(records, trace_csv, "csv")
        _dump_json(
            {
                "packet_count": meta.packet_count,
                "benign_count": meta.benign_count,
                "malicious_count": meta.malicious_count,
                "unknown_count": meta.unknown_count,
                "first_ts": meta.first_ts,
                "last_ts": meta.last_ts,
                "duration": meta.duration,
                "out_of_order": meta.out_of_order,
                "source_format": meta.source_format,
            },
            trace_meta,
        )

    runner.run(
        "ingest",
        [trace_path],
        [trace_csv, trace_meta],
        {"labels": label_text, "version": __version__},
        do_ingest,
    )

    # ---- extract ---------------------------------------------------------
    def do_extract():
        records, _ = read_trace(trace_csv)
        fm = extract_features(records, evict=cfg["features.evict"])
        save_binary(fm, features_bin)

    runner.run(
        "extract",
        [trace_csv],
        [features_bin, features_meta],
        {"evict": cfg["features.evict"], "version": __version__},
        do_extract,
    )

    # ---- tamper + tampered feature extraction (model independent) --------
    tampered_csvs = {b: path("tampered_%d_%d.csv" % b) for b in bands}
    tampered_bins = {b: path("features_tampered_%d_%d.bin" % b) for b in bands}
    match = parse_match(match_text)

    def do_tamper():
        records, _ = read_trace(trace_csv)
        for band in bands:
            result = tamper(records, band[0], band[1], match=match, seed=seed)
            write_trace(result.records, tampered_csvs[band], "csv")

    runner.run(
        "tamper",
        [trace_csv],
        list(tampered_csvs.values()),
        {"bands": ["%d:%d" % b for b in bands], "match": match_text, "seed": seed},
        do_tamper,
    )

    for band in bands:

        def do_extract_tampered(band=band):
            records, _ = read_trace(tampered_csvs[band])
            fm = extract_features(records, evict=cfg["features.evict"])
            save_binary(fm, tampered_bins[band])

        runner.run(
            "extract:tampered_%d_%d" % band,
            [tampered_csvs[band]],
            [tampered_bins[band], tampered_bins[band] + ".meta.json"],
            {"evict": cfg["features.evict"], "version": __version__},
            do_extract_tampered,
        )

    # ---- per-model stages --------------------------------------------------
    failures: dict[str, dict[str, str]] = {name: {} for name in models}

    def guarded(model: str, stage: str, prerequisites: list[str]):
        """Returns True when the stage may run; records skip reasons."""
        missing = [p for p in prerequisites if not os.path.exists(p)]
        if missing:
            failures[model][stage] = "prerequisite missing: %s" % ", ".join(
                os.path.basename(m) for m in missing
            )
            return False
        return True

    model_files = {}
    for name in models:
        mfiles = {
            "model": path("model_%s.bin" % name),
            "train": path("train_%s.json" % name),
            "eval": path("eval_%s.json" % name),
            "tree": path("tree_%s.json" % name),
            "dot": path("tree_%s.dot" % name),
            "trust": path("trust_%s.json" % name),
            "pruned": path("pruned_%s.json" % name),
            "pruned_dot": path("pruned_%s.dot" % name),
            "shap": path("shap_%s.json" % name),
            "agree": path("agree_%s.json" % name),
            "bias": path("bias_%s.json" % name),
        }
        model_files[name] = mfiles
        params = _model_params(cfg, name)

        # train
        def do_train(name=name, mfiles=mfiles, params=params):
            fm = load_binary(features_bin)
            records, _ = read_trace(trace_csv)
            train_rows = _resolve_train_rows(cfg, records)
            adapter = train_adapter(name, fm, train_rows, seed=seed, **params)
            save_adapter(adapter, mfiles["model"])
            info = {
                "model": name,
                "train_rows": train_rows,
                "threshold": adapter.threshold,
            }
            if hasattr(adapter.model, "groups"):
                info["groups"] = len(adapter.model.groups)
            _dump_json(info, mfiles["train"])

        try:
            runner.run(
                "train:" + name,
                [features_bin, trace_csv],
                [mfiles["model"], mfiles["train"]],
                {"params": params, "seed": seed, "rows": cfg["train.rows"], "version": __version__},
                do_train,
            )
        except Exception as exc:
            failures[name]["train"] = str(exc)

        # eval
        def do_eval(name=name, mfiles=mfiles):
            fm = load_binary(features_bin)
            adapter = load_adapter(mfiles["model"])
            train_rows = _load_json(mfiles["train"])["train_rows"]
            scores = adapter.score(fm.X[train_rows:])
            preds = (scores > adapter.threshold).astype(np.int8)
            labels_eval = fm.labels[train_rows:]
            known = labels_eval >= 0
            if known.any():
                metrics = evaluate(labels_eval[known], preds[known], scores[known]).as_dict()
            else:
                metrics = None
            _dump_json(
                {
                    "model": name,
                    "eval_rows": int(labels_eval.size),
                    "unknown_rows": int((~known).sum()),
                    "threshold": adapter.threshold,
                    "metrics": metrics,
                },
                mfiles["eval"],
            )

        if guarded(name, "eval", [mfiles["model"], mfiles["train"]]):
            try:
                runner.run(
                    "eval:" + name,
                    [features_bin, mfiles["model"], mfiles["train"]],
                    [mfiles["eval"]],
                    {"version": __version__},
                    do_eval,
                )
            except Exception as exc:
                failures[name]["eval"] = str(exc)

        # distill
        def do_distill(name=name, mfiles=mfiles):
            fm = load_binary(features_bin)
            adapter = load_adapter(mfiles["model"])
            tree, trust = distill(
                adapter,
                fm.X,
                sample_fraction=cfg["distill.sample_fraction"],
                iterations=cfg["distill.iterations"],
                max_depth=cfg["distill.max_depth"],
                min_leaf=cfg["distill.min_leaf"],
                holdout_fraction=cfg["distill.holdout_fraction"],
                stability_k=cfg["distill.stability_k"],
                seed=seed,
                feature_names=fm.columns,
                teacher_name=name,
            )
            tree.save_json(mfiles["tree"])
            with open(mfiles["dot"], "w", encoding="utf-8") as fh:
                fh.write(tree.to_dot() + "\n")
            _dump_json(trust.as_dict(), mfiles["trust"])

        distill_params = {
            "sample_fraction": cfg["distill.sample_fraction"],
            "iterations": cfg["distill.iterations"],
            "max_depth": cfg["distill.max_depth"],
            "min_leaf": cfg["distill.min_leaf"],
            "holdout_fraction": cfg["distill.holdout_fraction"],
            "stability_k": cfg["distill.stability_k"],
            "seed": seed,
            "version": __version__,
        }
        if guarded(name, "distill", [mfiles["model"]]):
            try:
                runner.run(
                    "distill:" + name,
                    [features_bin, mfiles["model"]],
                    [mfiles["tree"], mfiles["dot"], mfiles["trust"]],
                    distill_params,
                    do_distill,
                )
            except Exception as exc:
                failures[name]["distill"] = str(exc)

        # prune
        def do_prune(name=name, mfiles=mfiles):
            k = cfg["distill.prune_k"]
            tree = SurrogateTree.load_json(mfiles["tree"])
            if k < 1:
                _dump_json({"enabled": False}, mfiles["pruned"])
                with open(mfiles["pruned_dot"], "w", encoding="utf-8") as fh:
                    fh.write("digraph surrogate {}\n")
                return
            fm = load_binary(features_bin)
            adapter = load_adapter(mfiles["model"])
            pruned = top_k_prune(tree, k)
            rng = np.random.default_rng(seed)
            n_eval = min(5000, fm.n_rows)
            rows = np.sort(rng.choice(fm.n_rows, size=n_eval, replace=False))
            fid_pruned = fidelity(pruned, fm.X[rows], adapter)
            fid_full = fidelity(tree, fm.X[rows], adapter)
            doc = pruned.to_dict()
            _dump_json(
                {
                    "enabled": True,
                    "k": k,
                    "fidelity": fid_pruned,
                    "fidelity_unpruned_same_rows": fid_full,
                    "nodes": pruned.node_count,
                    "depth": pruned.depth,
                    "leaves": pruned.leaf_count,
                    "eval_rows": n_eval,
                    "tree": doc,
                },
                mfiles["pruned"],
            )
            with open(mfiles["pruned_dot"], "w", encoding="utf-8") as fh:
                fh.write(pruned.to_dot() + "\n")

        if guarded(name, "prune", [mfiles["tree"], mfiles["model"]]):
            try:
                runner.run(
                    "prune:" + name,
                    [mfiles["tree"], mfiles["model"], features_bin],
                    [mfiles["pruned"], mfiles["pruned_dot"]],
                    {"k": cfg["distill.prune_k"], "seed": seed, "version": __version__},
                    do_prune,
                )
            except Exception as exc:
                failures[name]["prune"] = str(exc)

        # shap
        def do_shap(name=name, mfiles=mfiles):
            fm = load_binary(features_bin)
            adapter = load_adapter(mfiles["model"])
            train_rows = _load_json(mfiles["train"])["train_rows"]
            rng = np.random.default_rng(seed)
            eval_idx = np.arange(train_rows, fm.n_rows)
            if eval_idx.size == 0:
                raise PipelineError("no rows after the training slice to explain")
            if eval_idx.size > cfg["shap.rows"]:
                eval_idx = np.sort(rng.choice(eval_idx, size=cfg["shap.rows"], replace=False))
            n_bg = min(cfg["shap.background_rows"], train_rows)
            bg_idx = np.sort(rng.choice(train_rows, size=n_bg, replace=False))
            expl = explain(
                adapter.score,
                fm.X[eval_idx],
                fm.X[bg_idx],
                budget=cfg["shap.budget"],
                seed=seed,
                feature_names=fm.columns,
            )
            summary = summarize(expl, top_n=cfg["shap.top_n"])
            _dump_json(
                {
                    "model": name,
                    "mode": expl.mode,
                    "n_coalitions": expl.n_coalitions,
                    "rows": int(expl.values.shape[0]),
                    "background_rows": expl.background_size,
                    "base_value": expl.base_value,
                    "efficiency_gap": expl.efficiency_gap(),
                    "singular_rows": len(expl.singular_rows),
                    "table": [list(row) for row in summary.table],
                    "top_features": [row[0] for row in summary.table],
                },
                mfiles["shap"],
            )

        if guarded(name, "shap", [mfiles["model"], mfiles["train"]]):
            try:
                runner.run(
                    "shap:" + name,
                    [features_bin, mfiles["model"], mfiles["train"]],
                    [mfiles["shap"]],
                    {
                        "budget": cfg["shap.budget"],
                        "rows": cfg["shap.rows"],
                        "background": cfg["shap.background_rows"],
                        "top_n": cfg["shap.top_n"],
                        "seed": seed,
                        "version": __version__,
                    },
                    do_shap,
                )
            except Exception as exc:
                failures[name]["shap"] = str(exc)

        # agreement
        def do_agree(name=name, mfiles=mfiles):
            fm = load_binary(features_bin)
            adapter = load_adapter(mfiles["model"])
            train_rows = _load_json(mfiles["train"])["train_rows"]
            tree = SurrogateTree.load_json(mfiles["tree"])
            rng = np.random.default_rng(seed)
            n_bg = min(cfg["shap.background_rows"], train_rows)
            bg_idx = np.sort(rng.choice(train_rows, size=n_bg, replace=False))
            rep = agreement(
                adapter.score,
                tree,
                fm.X,
                fm.X[bg_idx],
                m=cfg["agree.m"],
                top_n=cfg["agree.top_n"],
                min_rows=cfg["agree.min_rows"],
                rows_per_subset=cfg["agree.rows_per_subset"],
                budget=cfg["agree.budget"],
                seed=seed,
            )
            doc = rep.as_dict()
            doc["model"] = name
            _dump_json(doc, mfiles["agree"])

        if guarded(name, "agree", [mfiles["model"], mfiles["tree"], mfiles["train"]]):
            try:
                runner.run(
                    "agree:" + name,
                    [features_bin, mfiles["model"], mfiles["tree"], mfiles["train"]],
                    [mfiles["agree"]],
                    {
                        "m": cfg["agree.m"],
                        "top_n": cfg["agree.top_n"],
                        "min_rows": cfg["agree.min_rows"],
                        "rows_per_subset": cfg["agree.rows_per_subset"],
                        "budget": cfg["agree.budget"],
                        "seed": seed,
                        "version": __version__,
                    },
                    do_agree,
                )
            except Exception as exc:
                failures[name]["agree"] = str(exc)

        # bias
        def do_bias(name=name, mfiles=mfiles, params=params):
            records, _ = read_trace(trace_csv)
            variants = [("original", None, records)]
            precomputed = {"original": load_binary(features_bin)}
            for band in bands:
                recs, _ = read_trace(tampered_csvs[band])
                vname = "tampered_%d_%d" % band
                variants.append((vname, band, recs))
                precomputed[vname] = load_binary(tampered_bins[band])

            def trainer(fm, rows, seed=seed, **kw):
                return train_adapter(name, fm, rows, seed=seed, **params)

            rep = bias_compare(
                trainer,
                variants,
                match=match,
                seed=seed,
                vulnerable_below=cfg["bias.vulnerable_below"],
                stable_above=cfg["bias.stable_above"],
                model_name=name,
                precomputed=precomputed,
            )
            _dump_json(rep.as_dict(), mfiles["bias"])

        bias_inputs = [trace_csv, features_bin] + list(tampered_csvs.values()) + list(
            tampered_bins.values()
        )
        if guarded(name, "bias", [mfiles["model"]] + list(tampered_csvs.values())):
            try:
                runner.run(
                    "bias:" + name,
                    bias_inputs,
                    [mfiles["bias"]],
                    {
                        "params": params,
                        "bands": ["%d:%d" % b for b in bands],
                        "match": match_text,
                        "seed": seed,
                        "vulnerable_below": cfg["bias.vulnerable_below"],
                        "stable_above": cfg["bias.stable_above"],
                        "version": __version__,
                    },
                    do_bias,
                )
            except Exception as exc:
                failures[name]["bias"] = str(exc)

    # ---- report ------------------------------------------------------------
    report = build_report(out_dir, cfg, models, failures)
    _dump_json(report, path("report.json"))
    with open(path("report.txt"), "w", encoding="utf-8") as fh:
        fh.write(render_report(report))

    partial = any(failures[name] for name in models)
    return PipelineResult(
        report=report,
        exit_code=2 if partial else 0,
        out_dir=out_dir,
        executed=runner.executed,
        skipped=runner.skipped,
    )


# --------------------------------------------------------------------------
# report assembly


def selection_score(f1: float, fid: float, alpha: float) -> float:
    """Model selection score: alpha * F1 + (1 - alpha) * fidelity."""
    return alpha * f1 + (1.0 - alpha) * fid


def _maybe(path: str):
    return _load_json(path) if os.path.exists(path) else None


def build_report(out_dir: str, cfg: Config, models: list[str], failures: dict) -> dict:
    def path(p: str) -> str:
        return os.path.join(out_dir, p)

    alphas = list(cfg["report.alphas"])
    report: dict = {
        "schema": 1,
        "config": cfg.as_json_dict(),
        "trace": _maybe(path("trace_meta.json")),
        "models": {},
    }
    for name in models:
        entry: dict = {"failures": dict(failures.get(name, {}))}
        train_info = _maybe(path("train_%s.json" % name))
        eval_info = _maybe(path("eval_%s.json" % name))
        trust = _maybe(path("trust_%s.json" % name))
        pruned = _maybe(path("pruned_%s.json" % name))
        shap_info = _maybe(path("shap_%s.json" % name))
        agree_info = _maybe(path("agree_%s.json" % name))
        bias_info = _maybe(path("bias_%s.json" % name))

        entry["train"] = train_info
        entry["detection"] = (eval_info or {}).get("metrics")
        entry["eval_rows"] = (eval_info or {}).get("eval_rows")
        if trust is not None:
            trust = dict(trust)
        entry["distill"] = trust
        if pruned is not None and pruned.get("enabled"):
            entry["pruned"] = {
                k: pruned[k]
                for k in (
                    "k",
                    "fidelity",
                    "fidelity_unpruned_same_rows",
                    "nodes",
                    "depth",
                    "leaves",
                )
            }
        else:
            entry["pruned"] = None
        entry["shap"] = shap_info
        entry["agreement"] = agree_info
        entry["bias"] = (
            {
                "verdict": bias_info["verdict"],
                "drop_ratios": bias_info["drop_ratios"],
                "train_rows": bias_info["train_rows"],
                "original": bias_info["original"],
                "tampered": bias_info["tampered"],
                "warnings": bias_info["warnings"],
            }
            if bias_info is not None
            else None
        )

        f1 = None if entry["detection"] is None else entry["detection"].get("f1")
        fid = None if trust is None else trust.get("fidelity")
        entry["selection"] = {
            "%g" % a: (
                None if f1 is None or fid is None else selection_score(f1, fid, a)
            )
            for a in alphas
        }
        report["models"][name] = entry

    artifacts = {}
    for fname in sorted(os.listdir(out_dir)):
        full = os.path.join(out_dir, fname)
        if os.path.isfile(full) and fname not in ("report.json", "report.txt"):
            artifacts[fname] = _sha256(full)
    report["artifacts"] = artifacts
    return report


def _fmt(x, digits: str = "%.3g") -> str:
    if x is None:
        return "n/a"
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        if math.isnan(x):
            return "n/a"
        return digits % x
    return str(x)


def render_report(report: dict) -> str:
    cfg = report.get("config", {})
    alphas = cfg.get("report.alphas", [0.25, 0.5, 0.75])
    sort_alpha = cfg.get("report.sort_alpha", 0.5)
    sort_key = "%g" % sort_alpha

    lines: list[str] = []
    lines.append("nids-xray comparative report")
    lines.append("=" * 60)
    trace = report.get("trace") or {}
    if trace:
        lines.append(
            "trace: %s packets over %ss (%s benign / %s malicious / %s unknown)"
            % (
                _fmt(trace.get("packet_count")),
                _fmt(trace.get("duration")),
                _fmt(trace.get("benign_count")),
                _fmt(trace.get("malicious_count")),
                _fmt(trace.get("unknown_count")),
            )
        )
    lines.append("seed: %s" % _fmt(cfg.get("seed")))
    lines.append("")

    models = report.get("models", {})

    def sort_value(item):
        sel = item[1].get("selection") or {}
        v = sel.get(sort_key)
        return -v if v is not None else math.inf

    ordered = sorted(models.items(), key=sort_value)

    lines.append("model comparison (sorted by selection score at alpha=%s)" % sort_key)
    header = "%-12s %8s %9s %9s %9s %-26s" % (
        "model",
        "F1",
        "fidelity",
        "pruned",
        "agree",
        "bias verdict",
    ) + " ".join("%8s" % ("S(%g)" % a) for a in alphas)
    lines.append(header)
    lines.append("-" * len(header))
    flags: list[str] = []
    for name, entry in ordered:
        det = entry.get("detection") or {}
        trust = entry.get("distill") or {}
        pruned = entry.get("pruned") or {}
        agree_avg = (entry.get("agreement") or {}).get("average")
        bias = entry.get("bias") or {}
        sel = entry.get("selection") or {}
        fid = trust.get("fidelity")
        row = "%-12s %8s %9s %9s %9s %-26s" % (
            name,
            _fmt(det.get("f1")),
            _fmt(fid),
            _fmt(pruned.get("fidelity")),
            _fmt(agree_avg),
            bias.get("verdict", "n/a"),
        ) + " ".join("%8s" % _fmt((sel or {}).get("%g" % a)) for a in alphas)
        lines.append(row)
        if fid is not None and fid < 0.0:
            flags.append(
                "%s: surrogate fidelity %s is negative; the tree mimics the "
                "detector worse than predicting the detector's mean output"
                % (name, _fmt(fid))
            )
        for stage, msg in (entry.get("failures") or {}).items():
            flags.append("%s: stage %s failed: %s" % (name, stage, msg))
    if flags:
        lines.append("")
        lines.append("flags:")
        for f in flags:
            lines.append("  - " + f)

    for name, entry in ordered:
        lines.append("")
        lines.append("%s" % name)
        lines.append("-" * len(name))
        det = entry.get("detection")
        if det:
            lines.append(
                "  detection: precision=%s recall=%s f1=%s auc=%s (tp=%s fp=%s tn=%s fn=%s)"
                % (
                    _fmt(det.get("precision")),
                    _fmt(det.get("recall")),
                    _fmt(det.get("f1")),
                    _fmt(det.get("auc")),
                    _fmt(det.get("tp")),
                    _fmt(det.get("fp")),
                    _fmt(det.get("tn")),
                    _fmt(det.get("fn")),
                )
            )
        else:
            lines.append("  detection: n/a")
        trust = entry.get("distill")
        if trust:
            lines.append(
                "  surrogate: fidelity=%s (mean=%s std=%s over %s iterations), "
                "nodes=%s depth=%s leaves=%s stability=%s"
                % (
                    _fmt(trust.get("fidelity")),
                    _fmt(trust.get("fidelity_mean")),
                    _fmt(trust.get("fidelity_std")),
                    _fmt(trust.get("iterations")),
                    _fmt(trust.get("tree_nodes")),
                    _fmt(trust.get("tree_depth")),
                    _fmt(trust.get("tree_leaves")),
                    _fmt(trust.get("stability")),
                )
            )
            tops = trust.get("top_features") or []
            if tops:
                lines.append(
                    "  top tree features: "
                    + ", ".join("%s (%s)" % (n, _fmt(v)) for n, v in tops[:5])
                )
        else:
            lines.append("  surrogate: n/a")
        pruned = entry.get("pruned")
        if pruned:
            lines.append(
                "  pruned tree: k=%s fidelity=%s (unpruned on same rows: %s) nodes=%s"
                % (
                    _fmt(pruned.get("k")),
                    _fmt(pruned.get("fidelity")),
                    _fmt(pruned.get("fidelity_unpruned_same_rows")),
                    _fmt(pruned.get("nodes")),
                )
            )
        shap_info = entry.get("shap")
        if shap_info:
            lines.append(
                "  shap: base=%s mode=%s coalitions=%s efficiency_gap=%s"
                % (
                    _fmt(shap_info.get("base_value")),
                    shap_info.get("mode", "n/a"),
                    _fmt(shap_info.get("n_coalitions")),
                    _fmt(shap_info.get("efficiency_gap"), "%.3g"),
                )
            )
            tops = shap_info.get("top_features") or []
            if tops:
                lines.append("  top shap features: " + ", ".join(tops[:5]))
        agree_info = entry.get("agreement")
        if agree_info:
            subs = agree_info.get("subsets") or []
            lines.append(
                "  agreement: average=%s over %s subsets (requested %s, min %s rows)"
                % (
                    _fmt(agree_info.get("average")),
                    _fmt(agree_info.get("m_scored")),
                    _fmt(agree_info.get("m_requested")),
                    _fmt(agree_info.get("min_rows")),
                )
            )
            for s in subs:
                lines.append(
                    "    leaf %s: coverage=%s |T|=%s alpha=%s"
                    % (
                        _fmt(s.get("leaf")),
                        _fmt(s.get("coverage")),
                        len(s.get("path_features") or []),
                        _fmt(s.get("alpha")),
                    )
                )
            for w in agree_info.get("warnings") or []:
                lines.append("    warning: %s" % w)
        bias = entry.get("bias")
        if bias:
            lines.append(
                "  rate-bias: verdict=%s (train_rows=%s)"
                % (bias.get("verdict", "n/a"), _fmt(bias.get("train_rows")))
            )
            orig = bias.get("original") or {}
            lines.append(
                "    original: mean attack score=%s frac>phi=%s duration=%ss"
                % (
                    _fmt(orig.get("mean_attack_score")),
                    _fmt(orig.get("frac_above_phi")),
                    _fmt(orig.get("duration")),
                )
            )
            tampered_list = bias.get("tampered") or []
            ratios = bias.get("drop_ratios") or [None] * len(tampered_list)
            for t, ratio in zip(tampered_list, ratios):
                band = t.get("band") or ["?", "?"]
                lines.append(
                    "    band %s:%s: mean attack score=%s ratio=%s frac>phi=%s duration=%ss"
                    % (
                        band[0],
                        band[1],
                        _fmt(t.get("mean_attack_score")),
                        _fmt(ratio),
                        _fmt(t.get("frac_above_phi")),
                        _fmt(t.get("duration")),
                    )
                )
            for w in bias.get("warnings") or []:
                lines.append("    warning: %s" % w)
        sel = entry.get("selection") or {}
        lines.append(
            "  selection scores: "
            + ", ".join("alpha=%g: %s" % (a, _fmt(sel.get("%g" % a))) for a in alphas)
        )
    lines.append("")
    return "\n".join(lines)
