"""Timestamp tampering and the rate-bias experiment.

``tamper`` rewrites the timestamps of matched (attack) packets so their
rate, measured in whole-second buckets from the first matched packet's
second, is a fresh uniform draw from [lo, hi] packets per second, while
every other field and all benign timestamps stay untouched.  A detector
whose score collapses when the same packets merely arrive slower is
rate-biased; ``bias_experiment`` retrains a detector per tampered trace
and compares attack-region scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .features.extract import extract_features
from .packets import PacketRecord, copy_record


class TamperError(Exception):
    pass


def parse_match(text: str) -> dict[str, str]:
    """Parse ``field=value,...`` match criteria (e.g. ``label=malicious``)."""
    out: dict[str, str] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise TamperError("bad match clause %r (expected field=value)" % part)
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    if not out:
        raise TamperError("empty match specification")
    return out


_MATCH_FIELDS = (
    "label",
    "proto",
    "src_mac",
    "dst_mac",
    "src_ip",
    "dst_ip",
    "src_port",
    "dst_port",
)


def record_matches(rec: PacketRecord, match: dict[str, str]) -> bool:
    for fld, want in match.items():
        if fld not in _MATCH_FIELDS:
            raise TamperError("unknown match field %r" % fld)
        if fld == "label":
            want_label = {"malicious": 1, "benign": 0, "1": 1, "0": 0}.get(want)
            if want_label is None:
                raise TamperError("bad label value %r in match" % want)
            if rec.label != want_label:
                return False
        elif str(getattr(rec, fld)) != want:
            return False
    return True


DEFAULT_MATCH = {"label": "malicious"}


@dataclass
class RateSeries:
    """Per-second packet counts from the first packet's whole second."""

    start_sec: int
    benign: np.ndarray
    malicious: np.ndarray

    @property
    def total(self) -> int:
        return int(self.benign.sum() + self.malicious.sum())


def rate_series(records: list[PacketRecord]) -> RateSeries:
    if not records:
        return RateSeries(start_sec=0, benign=np.zeros(0, np.int64), malicious=np.zeros(0, np.int64))
    start = math.floor(records[0].ts)
    end = math.floor(records[-1].ts)
    n = int(end - start) + 1
    benign = np.zeros(n, dtype=np.int64)
    malicious = np.zeros(n, dtype=np.int64)
    for rec in records:
        b = int(math.floor(rec.ts)) - start
        if rec.label == 1:
            malicious[b] += 1
        else:
            benign[b] += 1
    return RateSeries(start_sec=int(start), benign=benign, malicious=malicious)


@dataclass
class TamperResult:
    records: list[PacketRecord]
    matched: int
    rate_lo: int
    rate_hi: int
    seconds_used: int
    rates_original: RateSeries
    rates_tampered: RateSeries


def tamper(
    records: list[PacketRecord],
    rate_lo: int,
    rate_hi: int,
    match: dict[str, str] | None = None,
    seed: int = 0,
) -> TamperResult:
    """Re-timestamp matched packets to a uniform [lo, hi] pkt/s rate.

    Starting at the first matched packet's second, each whole second gets
    a seeded uniform draw c in [lo, hi] and carries the next c matched
    packets (in their original order) spread evenly across that second;
    the rest spill over into following seconds.  The final second may
    fall short of lo when the queue runs out.  Benign packets keep their
    timestamps; the merged trace is re-sorted by timestamp with the
    original order preserved among equal timestamps.
    """
    if not 1 <= rate_lo <= rate_hi:
        raise TamperError("need 1 <= lo <= hi, got %d:%d" % (rate_lo, rate_hi))
    if match is None:
        match = dict(DEFAULT_MATCH)
    out = [copy_record(r) for r in records]
    targets = [r for r in out if record_matches(r, match)]
    rates_original = rate_series(records)
    if not targets:
        raise TamperError(
            "no packets match %s" % ",".join("%s=%s" % kv for kv in sorted(match.items()))
        )

    rng = np.random.default_rng(seed)
    sec = math.floor(targets[0].ts)
    pos = 0
    seconds_used = 0
    while pos < len(targets):
        c = int(rng.integers(rate_lo, rate_hi + 1))
        emit = min(c, len(targets) - pos)
        for j in range(emit):
            targets[pos + j].ts = sec + (j + 0.5) / emit
        pos += emit
        sec += 1
        seconds_used += 1

    out.sort(key=lambda r: r.ts)
    return TamperResult(
        records=out,
        matched=len(targets),
        rate_lo=rate_lo,
        rate_hi=rate_hi,
        seconds_used=seconds_used,
        rates_original=rates_original,
        rates_tampered=rate_series(out),
    )


# --------------------------------------------------------------------------
# bias experiment


@dataclass
class TraceBias:
    """Attack-region score statistics for one trace."""

    name: str
    band: tuple[int, int] | None
    packet_count: int
    attack_packets: int
    duration: float
    mean_attack_score: float
    max_attack_score: float
    frac_above_phi: float
    phi: float


@dataclass
class BiasReport:
    model_name: str
    train_rows: int
    original: TraceBias
    tampered: list[TraceBias]
    score_pairs: list[np.ndarray]
    drop_ratios: tuple[float, ...]
    verdict: str
    vulnerable_below: float
    stable_above: float
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        def trace_dict(t: TraceBias) -> dict:
            return {
                "name": t.name,
                "band": list(t.band) if t.band else None,
                "packet_count": t.packet_count,
                "attack_packets": t.attack_packets,
                "duration": t.duration,
                "mean_attack_score": t.mean_attack_score,
                "max_attack_score": t.max_attack_score,
                "frac_above_phi": t.frac_above_phi,
                "phi": t.phi,
            }

        return {
            "model": self.model_name,
            "train_rows": self.train_rows,
            "original": trace_dict(self.original),
            "tampered": [trace_dict(t) for t in self.tampered],
            "drop_ratios": list(self.drop_ratios),
            "verdict": self.verdict,
            "vulnerable_below": self.vulnerable_below,
            "stable_above": self.stable_above,
            "warnings": list(self.warnings),
        }


def default_train_rows(records: list[PacketRecord], match: dict[str, str]) -> int:
    """Rows strictly before the first matched packet's whole second.

    Tampering never moves an attack packet earlier than that second, so
    this prefix is identical (packets and timestamps) in the original
    and every tampered trace.
    """
    first = None
    for rec in records:
        if record_matches(rec, match):
            first = rec.ts
            break
    if first is None:
        raise TamperError("no packets match the attack predicate")
    cutoff = math.floor(first)
    n = 0
    for rec in records:
        if rec.ts >= cutoff:
            break
        n += 1
    if n == 0:
        raise TamperError("no rows precede the attack region to train on")
    return n


def bias_experiment(
    trainer,
    records: list[PacketRecord],
    bands: list[tuple[int, int]],
    match: dict[str, str] | None = None,
    train_rows: int | None = None,
    seed: int = 0,
    vulnerable_below: float = 0.5,
    stable_above: float = 0.9,
    model_params: dict | None = None,
    model_name: str | None = None,
    evict: bool = True,
) -> BiasReport:
    """Train-and-score the same detector on the original trace and on one
    tampered variant per rate band; compare mean attack-region scores.

    ``trainer(features, train_rows, seed, **model_params) -> ModelAdapter``
    is called per trace with identical arguments; traces share their
    pre-attack prefix, so weight differences can only come from the
    attack region itself.
    """
    if match is None:
        match = dict(DEFAULT_MATCH)
    if not bands:
        raise TamperError("need at least one rate band")
    for lo, hi in bands:
        if not 1 <= lo <= hi:
            raise TamperError("bad rate band %d:%d" % (lo, hi))

    variants: list[tuple[str, tuple[int, int] | None, list[PacketRecord]]] = [
        ("original", None, records)
    ]
    for lo, hi in bands:
        result = tamper(records, lo, hi, match=match, seed=seed)
        variants.append(("tampered_%d_%d" % (lo, hi), (lo, hi), result.records))

    return bias_compare(
        trainer,
        variants,
        match=match,
        train_rows=train_rows,
        seed=seed,
        vulnerable_below=vulnerable_below,
        stable_above=stable_above,
        model_params=model_params,
        model_name=model_name,
        evict=evict,
    )


def bias_compare(
    trainer,
    variants: list[tuple[str, tuple[int, int] | None, list[PacketRecord]]],
    match: dict[str, str] | None = None,
    train_rows: int | None = None,
    seed: int = 0,
    vulnerable_below: float = 0.5,
    stable_above: float = 0.9,
    model_params: dict | None = None,
    model_name: str | None = None,
    evict: bool = True,
    precomputed: dict | None = None,
) -> BiasReport:
    """Core comparison over pre-built traces; the first variant is the
    baseline the drop ratios are measured against.

    ``precomputed`` optionally maps variant names to ready feature
    matrices (extraction is deterministic, so callers may reuse them).
    """
    if match is None:
        match = dict(DEFAULT_MATCH)
    if len(variants) < 2:
        raise TamperError("need the original trace plus at least one variant")
    if train_rows is None:
        train_rows = min(default_train_rows(recs, match) for _, _, recs in variants)
    model_params = model_params or {}
    precomputed = precomputed or {}

    warnings: list[str] = []
    stats: list[TraceBias] = []
    attack_scores: list[np.ndarray] = []
    for name, band, recs in variants:
        fm = precomputed.get(name)
        if fm is None:
            fm = extract_features(recs, evict=evict)
        adapter = trainer(fm, train_rows, seed=seed, **model_params)
        scores = adapter.score(fm.X)
        attack_idx = np.array(
            [i for i, r in enumerate(recs) if record_matches(r, match)], dtype=np.int64
        )
        if attack_idx.size == 0:
            raise TamperError("trace %r has no packets matching the attack predicate" % name)
        att = scores[attack_idx]
        stats.append(
            TraceBias(
                name=name,
                band=band,
                packet_count=len(recs),
                attack_packets=int(attack_idx.size),
                duration=recs[-1].ts - recs[0].ts if recs else 0.0,
                mean_attack_score=float(att.mean()),
                max_attack_score=float(att.max()),
                frac_above_phi=float(np.mean(att > adapter.threshold)),
                phi=float(adapter.threshold),
            )
        )
        attack_scores.append(att)

    base = attack_scores[0]
    pairs = [np.column_stack([base, att]) for att in attack_scores[1:]]

    mean0 = stats[0].mean_attack_score
    if mean0 <= 0.0:
        warnings.append("original attack-region mean score is not positive; verdict inconclusive")
        ratios: tuple[float, ...] = ()
        verdict = "inconclusive"
    else:
        ratios = tuple(t.mean_attack_score / mean0 for t in stats[1:])
        if max(ratios) < vulnerable_below:
            verdict = "rate-bias vulnerable"
        elif min(ratios) > stable_above:
            verdict = "not rate-bias vulnerable"
        else:
            verdict = "inconclusive"

    return BiasReport(
        model_name=model_name or getattr(trainer, "__name__", "model"),
        train_rows=train_rows,
        original=stats[0],
        tampered=stats[1:],
        score_pairs=pairs,
        drop_ratios=ratios,
        verdict=verdict,
        vulnerable_below=vulnerable_below,
        stable_above=stable_above,
        warnings=warnings,
    )
