"""End-to-end pipeline: staging, resume, failure handling, reporting."""

import json
import os

import numpy as np
import pytest

from nids_xray.adapters import AdapterError
from nids_xray.config import Config
from nids_xray.packets import write_trace
from nids_xray.pipeline import run_pipeline, selection_score
from nids_xray.synthetic import synth_trace

FAST_OVERRIDES = (
    "models=reference,rate_blind",
    "train.m_max=6",
    "distill.iterations=3",
    "distill.max_depth=6",
    "distill.prune_k=2",
    "shap.budget=128",
    "shap.rows=10",
    "shap.background_rows=20",
    "agree.m=2",
    "agree.min_rows=60",
    "agree.rows_per_subset=30",
    "agree.budget=64",
    "tamper.bands=10:50,30:70",
)


@pytest.fixture(scope="module")
def tiny_trace_path(tmp_path_factory):
    recs = synth_trace(seed=4, benign_seconds=30.0, benign_pps=20.0,
                       flood_start=25.0, flood_seconds=1.0, flood_pps=600.0)
    p = tmp_path_factory.mktemp("trace") / "tiny.csv"
    write_trace(recs, str(p))
    return str(p)


@pytest.fixture(scope="module")
def finished_run(tiny_trace_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "out"
    cfg = Config.load(overrides=FAST_OVERRIDES)
    result = run_pipeline(tiny_trace_path, str(out), cfg)
    return result, cfg, tiny_trace_path


def test_full_run_no_failures(finished_run):
    result, _, _ = finished_run
    assert result.exit_code == 0
    for name in ("reference", "rate_blind"):
        assert result.report["models"][name]["failures"] == {}
    assert result.skipped == []
    assert len(result.executed) > 10


def test_run_artifacts_exist(finished_run):
    result, _, _ = finished_run
    out = result.out_dir
    for fname in (
        "report.json", "report.txt", "trace.csv", "trace_meta.json",
        "features.bin", "tampered_10_50.csv", "features_tampered_10_50.bin",
        "train_reference.json", "eval_reference.json", "tree_reference.json",
        "trust_reference.json", "pruned_reference.json", "shap_reference.json",
        "agree_reference.json", "bias_reference.json", "model_reference.bin",
    ):
        assert os.path.exists(os.path.join(out, fname)), fname


def test_report_content_sane(finished_run):
    result, cfg, _ = finished_run
    rep = result.report
    assert rep["schema"] == 1
    assert rep["config"]["seed"] == 0
    ref = rep["models"]["reference"]
    assert ref["detection"]["f1"] is not None
    assert 0.0 <= ref["detection"]["f1"] <= 1.0
    assert ref["distill"]["fidelity"] is not None
    assert ref["bias"]["verdict"] in (
        "rate-bias vulnerable", "not rate-bias vulnerable", "inconclusive",
    )
    # selection scores for every configured alpha
    for a in cfg["report.alphas"]:
        assert "%g" % a in ref["selection"]
    # artifact hashes cover emitted files but never the report itself
    assert "report.json" not in rep["artifacts"]
    assert "features.bin" in rep["artifacts"]


def test_report_json_sorted_and_relative(finished_run):
    result, _, _ = finished_run
    raw = open(os.path.join(result.out_dir, "report.json")).read()
    parsed = json.loads(raw)
    assert raw == json.dumps(parsed, indent=2, sort_keys=True) + "\n"
    assert not any(os.path.isabs(k) for k in parsed["artifacts"])


def test_rerun_skips_everything(finished_run):
    result, cfg, trace = finished_run
    again = run_pipeline(trace, result.out_dir, cfg)
    assert again.exit_code == 0
    assert again.executed == []
    assert len(again.skipped) == len(result.executed)
    assert again.report == result.report


def test_force_reruns_everything(finished_run, tmp_path):
    result, cfg, trace = finished_run
    forced = run_pipeline(trace, result.out_dir, cfg, force=True)
    assert forced.exit_code == 0
    assert forced.skipped == []
    assert forced.report == result.report


def test_identical_runs_byte_identical_reports(finished_run, tmp_path):
    result, cfg, trace = finished_run
    other = run_pipeline(trace, str(tmp_path / "other"), cfg)
    a = open(os.path.join(result.out_dir, "report.json"), "rb").read()
    b = open(os.path.join(other.out_dir, "report.json"), "rb").read()
    assert a == b
    at = open(os.path.join(result.out_dir, "report.txt"), "rb").read()
    bt = open(os.path.join(other.out_dir, "report.txt"), "rb").read()
    assert at == bt


def test_param_change_invalidates_stage(finished_run, tmp_path):
    _, _, trace = finished_run
    out = str(tmp_path / "redo")
    cfg = Config.load(overrides=FAST_OVERRIDES)
    first = run_pipeline(trace, out, cfg)
    assert first.exit_code == 0
    bumped = Config.load(overrides=FAST_OVERRIDES + ("distill.iterations=4",))
    second = run_pipeline(trace, out, bumped)
    assert any(s.startswith("distill:") for s in second.executed)
    assert any(s.startswith("ingest") for s in second.skipped)


def test_failing_model_isolated(tiny_trace_path, tmp_path):
    from nids_xray import adapters

    @adapters.register_trainer("boom")
    def _train(features, train_rows, seed=0, **params):
        raise AdapterError("synthetic failure for tests")

    try:
        cfg = Config.load(overrides=FAST_OVERRIDES + ("models=rate_blind,boom",))
        result = run_pipeline(tiny_trace_path, str(tmp_path / "out"), cfg)
        assert result.exit_code == 2
        boom = result.report["models"]["boom"]
        assert "train" in boom["failures"]
        assert "synthetic failure" in boom["failures"]["train"]
        # downstream stages report the missing prerequisite, never crash
        assert "eval" in boom["failures"]
        assert boom["detection"] is None
        assert boom["selection"]["0.5"] is None
        # the healthy model is unaffected
        ok = result.report["models"]["rate_blind"]
        assert ok["failures"] == {}
        assert ok["detection"]["f1"] is not None
        # report artifacts still written
        report_txt = open(os.path.join(result.out_dir, "report.txt")).read()
        assert "n/a" in report_txt
        assert "boom" in report_txt
    finally:
        adapters._TRAINERS.pop("boom", None)


def test_selection_score_endpoints():
    assert selection_score(0.9, 0.7, 1.0) == 0.9
    assert selection_score(0.9, 0.7, 0.0) == 0.7
    assert selection_score(0.9, 0.7, 0.5) == pytest.approx(0.8)


def test_report_table_sorted_by_selection(finished_run):
    result, cfg, _ = finished_run
    txt = open(os.path.join(result.out_dir, "report.txt")).read()
    lines = [
        l for l in txt.splitlines()
        if l.strip().startswith(("reference", "rate_blind")) and len(l.split()) >= 6
    ]
    assert len(lines) == 2
    # rows ordered by selection score at the configured sort alpha
    a = cfg["report.sort_alpha"]
    sel = {
        name: result.report["models"][name]["selection"]["%g" % a]
        for name in ("reference", "rate_blind")
    }
    want = sorted(sel, key=lambda n: -sel[n])
    got = [l.split()[0] for l in lines]
    assert got == want


def test_labels_flag_and_train_rows_override(tmp_path):
    # first-benign labeling plus explicit train.rows
    recs = synth_trace(seed=9, benign_seconds=20.0, benign_pps=20.0,
                       flood_start=18.0, flood_seconds=1.0, flood_pps=300.0)
    for r in recs:
        r.label = None
    p = tmp_path / "plain.csv"
    write_trace(recs, str(p))
    cfg = Config.load(overrides=(
        "models=rate_blind",
        "train.rows=150",
        "tamper.bands=10:50",
        "distill.iterations=2",
        "distill.max_depth=4",
        "shap.budget=64",
        "shap.rows=5",
        "shap.background_rows=10",
        "agree.m=1",
        "agree.min_rows=20",
        "agree.rows_per_subset=20",
        "agree.budget=64",
    ))
    result = run_pipeline(str(p), str(tmp_path / "out"), cfg, labels="first-benign=360")
    assert result.exit_code == 0
    assert result.report["models"]["rate_blind"]["train"]["train_rows"] == 150
    assert result.report["trace"]["malicious_count"] > 0
