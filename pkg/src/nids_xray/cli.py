"""Command line front end.

Subcommands mirror the library stages: ingest, extract, train, score,
explain-dt, explain-shap, agree, tamper, bias, report, run, synth.
Exit codes: 0 success, 1 fatal error, 2 pipeline finished with some
per-model stages failed.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .adapters import (
    AdapterError,
    available_models,
    load_adapter,
    save_adapter,
    train_adapter,
)
from .agreement import AgreementError, agreement
from .config import Config, ConfigError
from .features.extract import (
    FeatureError,
    extract_features,
    load_binary,
    load_csv,
    save_binary,
    save_csv,
)
from .metrics import evaluate
from .model_io import ModelIOError
from .packets import LabelSpec, TraceError, read_trace, write_trace
from .pipeline import PipelineError, build_report, render_report, run_pipeline, _dump_json
from .shapley import ShapError, explain, summarize
from .surrogate import SurrogateError, SurrogateTree, distill, top_k_prune
from .synthetic import synth_trace
from .tamper import TamperError, bias_compare, parse_match, tamper

_ERRORS = (
    AdapterError,
    AgreementError,
    ConfigError,
    FeatureError,
    ModelIOError,
    PipelineError,
    ShapError,
    SurrogateError,
    TamperError,
    TraceError,
    OSError,
    ValueError,
)


def _load_config(args) -> Config:
    cfg = Config.load(getattr(args, "config", None), overrides=tuple(getattr(args, "set", None) or ()))
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def _load_features(path: str):
    if path.endswith(".bin"):
        return load_binary(path)
    return load_csv(path)


def _save_features(fm, path: str) -> None:
    if path.endswith(".bin"):
        save_binary(fm, path)
    else:
        save_csv(fm, path)


def _parse_benign_rows(text: str) -> int:
    """Accepts start:end; the slice must begin at row 0."""
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError("expected start:end, got %r" % text)
    start, end = (int(p) for p in parts)
    if start != 0:
        raise ValueError("training slice must start at row 0, got %d" % start)
    if end <= 0:
        raise ValueError("training slice must end after row 0")
    return end


def _parse_band(text: str) -> tuple[int, int]:
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError("expected lo:hi, got %r" % text)
    lo, hi = (int(p) for p in parts)
    return lo, hi


def _model_cli_params(cfg: Config, name: str) -> dict:
    # mirrors pipeline._model_params; CLI training obeys the same config
    from .pipeline import _model_params

    return _model_params(cfg, name)


# --------------------------------------------------------------------------
# subcommand handlers (each returns an exit code)


def cmd_ingest(args, cfg: Config) -> int:
    spec = LabelSpec.parse(args.labels) if args.labels else None
    records, meta = read_trace(args.infile, label_spec=spec)
    n = write_trace(records, args.out, "csv")
    print("wrote %d packets to %s" % (n, args.out))
    print(
        "labels: %d benign, %d malicious, %d unknown"
        % (meta.benign_count, meta.malicious_count, meta.unknown_count)
    )
    print("duration: %.6g s" % meta.duration)
    if meta.out_of_order:
        print("clamped %d out-of-order timestamps" % meta.out_of_order)
    return 0


def cmd_extract(args, cfg: Config) -> int:
    records, _ = read_trace(args.infile)
    fm = extract_features(records, evict=cfg["features.evict"], backend=args.backend)
    _save_features(fm, args.out)
    print("wrote %d rows x %d features to %s" % (fm.n_rows, fm.X.shape[1], args.out))
    return 0


def cmd_train(args, cfg: Config) -> int:
    fm = _load_features(args.features)
    rows = _parse_benign_rows(args.benign_rows)
    name = args.name
    adapter = train_adapter(name, fm, rows, seed=cfg["seed"], **_model_cli_params(cfg, name))
    save_adapter(adapter, args.model)
    print("trained %s on rows 0:%d, threshold %.6g" % (name, rows, adapter.threshold))
    print("saved model to %s" % args.model)
    return 0


def cmd_score(args, cfg: Config) -> int:
    adapter = load_adapter(args.model)
    fm = _load_features(args.features)
    scores = adapter.score(fm.X)
    alerts = (scores > adapter.threshold).astype(np.int8)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("row,score,alert\n")
            for i in range(scores.size):
                fh.write("%d,%s,%d\n" % (i, repr(float(scores[i])), alerts[i]))
        print("wrote %d scores to %s" % (scores.size, args.out))
    print(
        "threshold %.6g, %d/%d rows above threshold"
        % (adapter.threshold, int(alerts.sum()), scores.size)
    )
    known = fm.labels >= 0
    if known.any() and known.sum() < fm.n_rows:
        print("%d rows carry no label and are excluded from metrics" % int((~known).sum()))
    if known.any():
        m = evaluate(fm.labels[known], alerts[known], scores[known])
        print(
            "precision=%.6g recall=%.6g f1=%.6g auc=%s"
            % (m.precision, m.recall, m.f1, "n/a" if m.auc is None else "%.6g" % m.auc)
        )
    return 0


def cmd_explain_dt(args, cfg: Config) -> int:
    adapter = load_adapter(args.model)
    fm = _load_features(args.features)
    tree, trust = distill(
        adapter,
        fm.X,
        sample_fraction=args.fraction,
        iterations=cfg["distill.iterations"],
        max_depth=cfg["distill.max_depth"],
        min_leaf=cfg["distill.min_leaf"],
        holdout_fraction=cfg["distill.holdout_fraction"],
        stability_k=cfg["distill.stability_k"],
        seed=cfg["seed"],
        feature_names=fm.columns,
        teacher_name=adapter.name,
    )
    print(
        "surrogate: %d nodes, depth %d, fidelity %.6g (mean %.6g, std %.6g over %d fits)"
        % (
            tree.node_count,
            tree.depth,
            trust.fidelity,
            trust.fidelity_mean,
            trust.fidelity_std,
            trust.iterations,
        )
    )
    print("stability: %.6g (top-%d feature sets)" % (trust.stability, trust.stability_k))
    if trust.top_features:
        print("top features by weighted impurity decrease:")
        for fname, val in trust.top_features:
            print("  %-28s %.6g" % (fname, val))
    if args.topk is not None:
        pruned = top_k_prune(tree, args.topk)
        print(
            "pruned to top-%d splits: %d nodes, depth %d"
            % (args.topk, pruned.node_count, pruned.depth)
        )
        if args.pruned_out:
            pruned.save_json(args.pruned_out)
            print("saved pruned tree to %s" % args.pruned_out)
    if args.out:
        tree.save_json(args.out)
        print("saved tree to %s" % args.out)
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(tree.to_dot() + "\n")
        print("saved dot rendering to %s" % args.dot)
    return 0


def cmd_explain_shap(args, cfg: Config) -> int:
    adapter = load_adapter(args.model)
    rows = _load_features(args.rows)
    background = _load_features(args.background)
    # oversized inputs are sampled down to the configured limits, same
    # as the pipeline stage; pass smaller files to pick rows by hand
    rng = np.random.default_rng(cfg["seed"])
    row_idx = np.arange(rows.n_rows)
    if rows.n_rows > cfg["shap.rows"]:
        row_idx = np.sort(rng.choice(rows.n_rows, size=cfg["shap.rows"], replace=False))
        print("explaining %d of %d rows (shap.rows)" % (row_idx.size, rows.n_rows))
    bg = background.X
    if background.n_rows > cfg["shap.background_rows"]:
        bg_idx = np.sort(
            rng.choice(background.n_rows, size=cfg["shap.background_rows"], replace=False)
        )
        bg = background.X[bg_idx]
    expl = explain(
        adapter.score,
        rows.X[row_idx],
        bg,
        budget=args.budget,
        seed=cfg["seed"],
        feature_names=rows.columns,
    )
    summary = summarize(expl, top_n=args.topn)
    print("mode: %s (%d coalitions per row)" % (expl.mode, expl.n_coalitions))
    print(summary.render_text())
    print("max efficiency gap: %.3g" % expl.efficiency_gap())
    if expl.singular_rows:
        print("singular regression for rows: %s" % list(expl.singular_rows))
    if args.out:
        _dump_json(
            {
                "mode": expl.mode,
                "n_coalitions": expl.n_coalitions,
                "base_value": expl.base_value,
                "row_indices": row_idx,
                "values": expl.values,
                "fx": expl.fx,
                "feature_names": list(rows.columns),
                "singular_rows": list(expl.singular_rows),
            },
            args.out,
        )
        print("saved attributions to %s" % args.out)
    return 0


def cmd_agree(args, cfg: Config) -> int:
    adapter = load_adapter(args.model)
    fm = _load_features(args.features)
    tree = SurrogateTree.load_json(args.tree)
    rng = np.random.default_rng(cfg["seed"])
    if args.background:
        background = _load_features(args.background).X
    else:
        n_bg = min(cfg["shap.background_rows"], fm.n_rows)
        background = fm.X[np.sort(rng.choice(fm.n_rows, size=n_bg, replace=False))]
    rep = agreement(
        adapter.score,
        tree,
        fm.X,
        background,
        m=args.m,
        top_n=args.topn,
        min_rows=cfg["agree.min_rows"],
        rows_per_subset=cfg["agree.rows_per_subset"],
        budget=cfg["agree.budget"],
        seed=cfg["seed"],
    )
    names = tree.feature_names or fm.columns
    for sub in rep.subsets:
        alpha = "n/a" if sub.alpha is None else "%.6g" % sub.alpha
        shown = [names[f] if names else str(f) for f in sorted(sub.path_features)]
        print(
            "leaf %d: coverage %d rows, path features %s, alpha %s"
            % (sub.leaf, sub.coverage, shown, alpha)
        )
    for w in rep.warnings:
        print("warning: %s" % w)
    if rep.average is None:
        print("agreement: n/a (no scorable subsets)")
    else:
        print("agreement over %d subsets: %.6g" % (rep.m_scored, rep.average))
    if args.out:
        _dump_json(rep.as_dict(), args.out)
        print("saved agreement report to %s" % args.out)
    return 0


def cmd_tamper(args, cfg: Config) -> int:
    records, _ = read_trace(args.infile)
    lo, hi = _parse_band(args.band)
    match = parse_match(args.match) if args.match else None
    result = tamper(records, lo, hi, match=match, seed=cfg["seed"])
    write_trace(result.records, args.out, "csv")
    print(
        "rewrote %d matched packets into %d seconds at %d:%d packets/s"
        % (result.matched, result.seconds_used, lo, hi)
    )
    print("wrote %s" % args.out)
    return 0


def cmd_bias(args, cfg: Config) -> int:
    match = parse_match(args.match) if args.match else parse_match(cfg["tamper.match"])
    variants = []
    for i, path in enumerate(args.traces):
        records, _ = read_trace(path)
        name = "original" if i == 0 else path
        variants.append((name, None, records))
    name = args.name
    params = _model_cli_params(cfg, name)

    def trainer(fm, rows, seed=0, **kw):
        return train_adapter(name, fm, rows, seed=seed, **params)

    rep = bias_compare(
        trainer,
        variants,
        match=match,
        train_rows=args.train_rows,
        seed=cfg["seed"],
        vulnerable_below=cfg["bias.vulnerable_below"],
        stable_above=cfg["bias.stable_above"],
        model_name=name,
        evict=cfg["features.evict"],
    )
    print("model: %s, shared training rows: %d" % (name, rep.train_rows))
    print(
        "original: mean attack score %.6g (%.0f%% of attack rows above threshold)"
        % (rep.original.mean_attack_score, 100.0 * rep.original.frac_above_phi)
    )
    for t, ratio in zip(rep.tampered, rep.drop_ratios or [float("nan")] * len(rep.tampered)):
        print(
            "%s: mean attack score %.6g, ratio %.6g, duration %.6g s"
            % (t.name, t.mean_attack_score, ratio, t.duration)
        )
    for w in rep.warnings:
        print("warning: %s" % w)
    print("verdict: %s" % rep.verdict)
    if args.out:
        _dump_json(rep.as_dict(), args.out)
        print("saved bias report to %s" % args.out)
    return 0


def cmd_report(args, cfg: Config) -> int:
    models = list(cfg["models"])
    report = build_report(args.dir, cfg, models, {m: {} for m in models})
    _dump_json(report, args.dir + "/report.json")
    text = render_report(report)
    with open(args.dir + "/report.txt", "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")
    return 0


def cmd_run(args, cfg: Config) -> int:
    result = run_pipeline(
        args.infile,
        args.out_dir,
        cfg,
        labels=args.labels,
        force=args.force,
    )
    print(
        "pipeline finished: %d stages executed, %d skipped (up to date)"
        % (len(result.executed), len(result.skipped))
    )
    print("report: %s/report.txt" % result.out_dir)
    if result.exit_code == 2:
        failed = {
            name: sorted(entry["failures"])
            for name, entry in result.report["models"].items()
            if entry["failures"]
        }
        print("some stages failed: %s" % failed, file=sys.stderr)
    return result.exit_code


def cmd_synth(args, cfg: Config) -> int:
    records = synth_trace(
        seed=cfg["seed"],
        benign_seconds=args.benign_seconds,
        benign_pps=args.benign_pps,
        flood_start=args.flood_start,
        flood_seconds=args.flood_seconds,
        flood_pps=args.flood_pps,
    )
    n = write_trace(records, args.out)
    labelled = sum(1 for r in records if r.label == 1)
    print("wrote %d packets (%d labeled malicious) to %s" % (n, labelled, args.out))
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--config", default=None, help="config file of key = value lines")
    common.add_argument(
        "--set",
        action="append",
        default=None,
        metavar="KEY=VALUE",
        help="override one config entry (repeatable)",
    )

    parser = argparse.ArgumentParser(
        prog="nids-xray",
        description="Train packet-level anomaly detectors and stress-test their explanations.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("ingest", parents=[common], help="normalize a pcap or csv trace to csv")
    p.add_argument("--in", dest="infile", required=True, help="input trace (.pcap or .csv)")
    p.add_argument("--labels", default=None, help="column | first-benign=N | match=field:value,...")
    p.add_argument("--out", required=True, help="output csv trace")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", parents=[common], help="compute per-packet feature rows")
    p.add_argument("--in", dest="infile", required=True, help="input csv trace")
    p.add_argument("--out", required=True, help="output features (.csv or .bin)")
    p.add_argument(
        "--backend",
        choices=("compiled", "python"),
        default=None,
        help="force a feature kernel implementation",
    )
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="fit a detector on a benign prefix")
    p.add_argument("--features", required=True, help="feature matrix (.csv or .bin)")
    p.add_argument("--benign-rows", required=True, help="training slice, e.g. 0:120000")
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument(
        "--name",
        default="reference",
        choices=available_models(),
        help="which detector to train",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", parents=[common], help="score rows with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", default=None, help="optional csv of row,score,alert")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser(
        "explain-dt", parents=[common], help="distill the model into a decision tree"
    )
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument(
        "--fraction",
        type=float,
        default=0.3,
        help="row fraction sampled per distillation iteration",
    )
    p.add_argument("--topk", type=int, default=None, help="also prune to the top k splits")
    p.add_argument("--out", default=None, help="save the tree as json")
    p.add_argument("--dot", default=None, help="save a graphviz rendering")
    p.add_argument("--pruned-out", default=None, help="save the pruned tree as json")
    p.set_defaults(func=cmd_explain_dt)

    p = sub.add_parser(
        "explain-shap", parents=[common], help="per-feature attributions for selected rows"
    )
    p.add_argument("--model", required=True)
    p.add_argument("--rows", required=True, help="feature rows to explain (.csv or .bin)")
    p.add_argument("--background", required=True, help="background rows (.csv or .bin)")
    p.add_argument("--budget", type=int, default=2048, help="coalition evaluations per row")
    p.add_argument("--topn", type=int, default=10, help="features shown in the summary")
    p.add_argument("--out", default=None, help="save attributions as json")
    p.set_defaults(func=cmd_explain_shap)

    p = sub.add_parser(
        "agree", parents=[common], help="tree-path vs attribution agreement score"
    )
    p.add_argument("--model", required=True)
    p.add_argument("--tree", required=True, help="surrogate tree json")
    p.add_argument("--features", required=True)
    p.add_argument("--m", type=int, default=3, help="number of leaf subsets")
    p.add_argument("--topn", type=int, default=10, help="attribution ranking depth")
    p.add_argument("--background", default=None, help="background rows (.csv or .bin)")
    p.add_argument("--out", default=None, help="save the agreement report as json")
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("tamper", parents=[common], help="rewrite attack timing into a rate band")
    p.add_argument("--in", dest="infile", required=True, help="input csv trace")
    p.add_argument("--band", required=True, help="packets per second band lo:hi")
    p.add_argument("--match", default=None, help="attack predicate, e.g. label=malicious,proto=ARP")
    p.add_argument("--out", required=True, help="output csv trace")
    p.set_defaults(func=cmd_tamper)

    p = sub.add_parser(
        "bias", parents=[common], help="compare attack scores across tampered traces"
    )
    p.add_argument(
        "--traces",
        nargs="+",
        required=True,
        help="original trace first, then tampered variants",
    )
    p.add_argument("--match", default=None, help="attack predicate (default from config)")
    p.add_argument("--train-rows", type=int, default=None, help="shared training prefix length")
    p.add_argument(
        "--name",
        default="reference",
        choices=available_models(),
        help="which detector to train per trace",
    )
    p.add_argument("--out", default=None, help="save the bias report as json")
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("report", parents=[common], help="rebuild reports from stage artifacts")
    p.add_argument("--dir", required=True, help="pipeline output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", parents=[common], help="run the full pipeline on a trace")
    p.add_argument("--in", dest="infile", required=True, help="input trace (.pcap or .csv)")
    p.add_argument("--out-dir", default="out", help="artifact directory")
    p.add_argument("--labels", default=None, help="label rule for ingest")
    p.add_argument("--force", action="store_true", help="rerun stages even if up to date")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic labeled trace")
    p.add_argument("--out", required=True, help="output trace (.csv or .pcap)")
    p.add_argument("--benign-seconds", type=float, default=240.0)
    p.add_argument("--benign-pps", type=float, default=50.0)
    p.add_argument("--flood-start", type=float, default=180.0)
    p.add_argument("--flood-seconds", type=float, default=2.0)
    p.add_argument("--flood-pps", type=float, default=5000.0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_help()
        return 1
    try:
        cfg = _load_config(args)
        return int(args.func(args, cfg) or 0)
    except _ERRORS as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
