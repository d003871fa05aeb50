import math

import numpy as np
import pytest

from nids_xray.features import (
    DEFAULT_BACKEND,
    FEATURE_NAMES,
    LAMBDAS,
    N_FEATURES,
    extract_features,
    load_binary,
    load_csv,
    make_kernel,
    save_binary,
    save_csv,
)
from nids_xray.features.extract import FeatureError, FeatureMatrix
from nids_xray.features.names import FAMILY_OFFSETS
from nids_xray.packets import PacketRecord
from nids_xray.synthetic import synth_trace

from oracles import DirectStats, pearson, undamped_stats

BACKENDS = ["python"] + (["compiled"] if DEFAULT_BACKEND == "compiled" else [])


def mk(ts, src_ip, dst_ip, sport=443, dport=51000, size=100, src_mac=None):
    return PacketRecord(
        ts=ts,
        src_mac=src_mac or ("aa:00:00:00:00:0" + src_ip[-1]),
        dst_mac="bb:00:00:00:00:01",
        src_ip=src_ip,
        dst_ip=dst_ip,
        proto="TCP",
        src_port=sport,
        dst_port=dport,
        frame_len=size,
        label=0,
    )


def process(kernel, rec):
    out = np.zeros(N_FEATURES)
    kernel.process(
        rec.ts,
        rec.src_mac,
        rec.src_ip,
        rec.dst_ip,
        rec.src_port,
        rec.dst_port,
        float(rec.frame_len),
        out,
    )
    return out


# -- layout ------------------------------------------------------------------


def test_feature_names_layout():
    assert len(FEATURE_NAMES) == N_FEATURES == 115
    assert FEATURE_NAMES[0] == "MI_dir_5_weight"
    assert FEATURE_NAMES[1] == "MI_dir_5_mean"
    assert FEATURE_NAMES[2] == "MI_dir_5_std"
    assert FEATURE_NAMES[3] == "MI_dir_3_weight"
    assert FEATURE_NAMES[15] == "H_5_weight"
    assert FEATURE_NAMES[30] == "HH_5_weight_0"
    assert FEATURE_NAMES[36] == "HH_5_pcc_0_1"
    assert FEATURE_NAMES[65] == "HH_jit_5_weight"
    assert FEATURE_NAMES[80] == "HpHp_5_weight_0"
    assert FAMILY_OFFSETS == {"MI_dir": 0, "H": 15, "HH": 30, "HH_jit": 65, "HpHp": 80}
    # lambda tags use %g so 0.1 and 0.01 have no trailing zeros
    assert "MI_dir_0.1_weight" in FEATURE_NAMES
    assert "HpHp_0.01_pcc_0_1" in FEATURE_NAMES
    assert len(set(FEATURE_NAMES)) == 115
    assert LAMBDAS == (5.0, 3.0, 1.0, 0.1, 0.01)


# -- hand-checked values -------------------------------------------------------


@pytest.mark.parametrize("backend", BACKENDS)
def test_first_packet_cold_start(backend):
    k = make_kernel(backend)
    row = process(k, mk(100.0, "10.0.0.1", "10.0.0.2"))
    for fam, off in FAMILY_OFFSETS.items():
        width = 7 if fam in ("HH", "HpHp") else 3
        for li in range(5):
            base = off + li * width
            assert row[base] == 1.0, (fam, li)  # weight
            assert row[base + 2] == 0.0, (fam, li)  # std
    # all stds and pccs are zero on the first packet
    for i, name in enumerate(FEATURE_NAMES):
        if name.endswith("_std") or "_std_0" in name or "_pcc_" in name:
            assert row[i] == 0.0, name


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_insert_stat(backend):
    k = make_kernel(backend)
    row = process(k, mk(0.0, "10.0.0.1", "10.0.0.2", size=100))
    i = FEATURE_NAMES.index("H_5_weight")
    assert row[i] == 1.0
    assert row[i + 1] == 100.0  # mean
    assert row[i + 2] == 0.0  # std


@pytest.mark.parametrize("backend", BACKENDS)
def test_decay_hand_value(backend):
    # lambda=0.1: insert 100 at t=0 then 200 at t=10 -> gamma=0.5,
    # w=1.5, ls=250, mean=166.666...
    k = make_kernel(backend)
    process(k, mk(0.0, "10.0.0.1", "10.0.0.2", size=100))
    row = process(k, mk(10.0, "10.0.0.1", "10.0.0.2", size=200))
    i = FEATURE_NAMES.index("H_0.1_weight")
    assert math.isclose(row[i], 1.5, rel_tol=0, abs_tol=1e-12)
    assert math.isclose(row[i + 1], 250.0 / 1.5, rel_tol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_same_timestamp_equals_undamped(backend):
    rng = np.random.default_rng(7)
    values = rng.uniform(40, 1500, size=50)
    k = make_kernel(backend)
    row = None
    for v in values:
        row = process(k, mk(42.0, "10.0.0.1", "10.0.0.2", size=int(v)))
    w, mean, std = undamped_stats([int(v) for v in values])
    for lam in ("5", "3", "1", "0.1", "0.01"):
        i = FEATURE_NAMES.index("H_%s_weight" % lam)
        assert math.isclose(row[i], w, rel_tol=1e-9)
        assert math.isclose(row[i + 1], mean, rel_tol=1e-9)
        assert math.isclose(row[i + 2], std, rel_tol=1e-9, abs_tol=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_one_direction_only_pcc_zero(backend):
    k = make_kernel(backend)
    row = None
    for i in range(5):
        row = process(k, mk(float(i), "10.0.0.1", "10.0.0.2", size=100 + i))
    i = FEATURE_NAMES.index("HH_5_covariance_0_1")
    j = FEATURE_NAMES.index("HH_5_pcc_0_1")
    assert row[i] == 0.0
    assert row[j] == 0.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_symmetric_streams_pcc_toward_one(backend):
    # equal sizes alternating at one timestamp per pair (gamma=1): the
    # Pearson of the two raw value lists is exactly 1, and the streaming
    # estimate approaches it from below as the sequence smooths out.
    # The one-sided residual pairing converges O(1/n), so the limit is
    # checked as monotone approach plus oracle agreement, not equality.
    def pcc_after(n):
        k = make_kernel(backend)
        sizes = [500.0 + 0.01 * j for j in range(n)]  # slowly varying
        row = None
        for size in sizes:
            process(k, mk(0.0, "10.0.0.1", "10.0.0.2", size=size))
            row = process(k, mk(0.0, "10.0.0.2", "10.0.0.1", size=size))
        return row[FEATURE_NAMES.index("HH_5_pcc_0_1")], sizes

    p_small, _ = pcc_after(150)
    p_big, sizes = pcc_after(1500)
    assert pearson(sizes, sizes) == 1.0
    assert 0.0 < p_small < p_big <= 1.0
    assert p_big > 0.99


@pytest.mark.parametrize("backend", BACKENDS)
def test_magnitude_three_four_five(backend):
    # engineer mean_i=30 (sender) and mean_j=40 (receiver): magnitude 50
    k = make_kernel(backend)
    process(k, mk(0.0, "10.0.0.2", "10.0.0.1", size=40))
    row = process(k, mk(0.0, "10.0.0.1", "10.0.0.2", size=30))
    i = FEATURE_NAMES.index("HH_5_magnitude_0_1")
    assert math.isclose(row[i], 50.0, rel_tol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_jitter_values(backend):
    k = make_kernel(backend)
    r0 = process(k, mk(10.0, "10.0.0.1", "10.0.0.2"))
    r1 = process(k, mk(10.5, "10.0.0.1", "10.0.0.2"))
    r2 = process(k, mk(12.5, "10.0.0.1", "10.0.0.2"))
    i = FEATURE_NAMES.index("HH_jit_5_mean")
    assert r0[i] == 0.0  # first packet: no gap yet
    assert math.isclose(r1[i], 0.5 / (2 ** (-5 * 0.5) + 1), rel_tol=1e-12)
    assert r2[i] > 0.0


# -- oracle ------------------------------------------------------------------


def _oracle_row(oracles, rec, t):
    """Recompute all 115 features for rec from full histories at time t."""
    row = np.zeros(N_FEATURES)
    mi, h, hh, jit, hp = oracles
    src_sock = (rec.src_ip, rec.src_port)
    dst_sock = (rec.dst_ip, rec.dst_port)
    for li, lam in enumerate(LAMBDAS):
        row[0 + li * 3 : 3 + li * 3] = mi.read_1d((rec.src_mac, rec.src_ip), lam, t)
        row[15 + li * 3 : 18 + li * 3] = h.read_1d(rec.src_ip, lam, t)
        row[30 + li * 7 : 37 + li * 7] = hh.read_2d(
            (rec.src_ip, rec.dst_ip), (rec.dst_ip, rec.src_ip), lam, t
        )
        row[65 + li * 3 : 68 + li * 3] = jit.read_1d((rec.src_ip, rec.dst_ip), lam, t)
        row[80 + li * 7 : 87 + li * 7] = hp.read_2d(
            (src_sock, dst_sock), (dst_sock, src_sock), lam, t
        )
    return row


def _oracle_insert(oracles, rec, last_seen):
    mi, h, hh, jit, hp = oracles
    t, v = rec.ts, float(rec.frame_len)
    mi.insert((rec.src_mac, rec.src_ip), t, v)
    h.insert(rec.src_ip, t, v)
    hh.insert_pair((rec.src_ip, rec.dst_ip), (rec.dst_ip, rec.src_ip), t, v)
    key = (rec.src_ip, rec.dst_ip)
    gap = max(t - last_seen[key], 0.0) if key in last_seen else 0.0
    last_seen[key] = t
    jit.insert(key, t, gap)
    src_sock = (rec.src_ip, rec.src_port)
    dst_sock = (rec.dst_ip, rec.dst_port)
    hp.insert_pair((src_sock, dst_sock), (dst_sock, src_sock), t, v)


@pytest.mark.parametrize("backend", BACKENDS)
def test_full_history_oracle_1000_packets(backend):
    rng = np.random.default_rng(11)
    hosts = ["10.0.0.%d" % i for i in range(1, 5)]
    k = make_kernel(backend)
    oracles = (DirectStats(), DirectStats(), DirectStats(), DirectStats(), DirectStats())
    last_seen: dict = {}
    t = 1000.0
    check_at = set(range(0, 1000, 97)) | {999}
    for i in range(1000):
        t += float(rng.exponential(0.05))
        a, b = rng.choice(4, size=2, replace=False)
        rec = mk(t, hosts[a], hosts[b], sport=int(443 + a), dport=int(51000 + b),
                 size=int(rng.integers(60, 1500)))
        got = process(k, rec)
        _oracle_insert(oracles, rec, last_seen)
        if i in check_at:
            want = _oracle_row(oracles, rec, t)
            np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_clock_regression_counted_not_decayed(backend):
    k = make_kernel(backend)
    process(k, mk(10.0, "10.0.0.1", "10.0.0.2"))
    row = process(k, mk(9.0, "10.0.0.1", "10.0.0.2"))  # time goes backwards
    assert k.clock_regressions == 1
    i = FEATURE_NAMES.index("H_5_weight")
    assert row[i] == 2.0  # dt clamped to 0 so no decay and no growth
    assert np.all(np.isfinite(row))


def test_eviction_drops_idle_streams():
    k = make_kernel("python")
    process(k, mk(0.0, "10.0.0.1", "10.0.0.2"))
    process(k, mk(1.0, "10.0.0.3", "10.0.0.4", sport=80, dport=4000))
    before = k.stream_count()
    # idle far beyond 128 half-lives of the slowest lambda
    removed = k.sweep(1.0 + 128 * math.log(2) / 0.01 + 1.0, 128 * math.log(2) / 0.01)
    assert removed > 0
    assert k.stream_count() < before


def test_backends_bit_identical(small_trace):
    if DEFAULT_BACKEND != "compiled":
        pytest.skip("compiled backend unavailable")
    a = extract_features(small_trace, backend="compiled")
    b = extract_features(small_trace, backend="python")
    assert np.array_equal(a.X, b.X)
    assert np.array_equal(a.labels, b.labels)


def test_eviction_does_not_change_features(small_trace):
    a = extract_features(small_trace, evict=True, sweep_interval=512)
    b = extract_features(small_trace, evict=False)
    np.testing.assert_allclose(a.X, b.X, rtol=1e-9, atol=1e-9)


# -- matrix I/O ----------------------------------------------------------------


def test_feature_csv_round_trip(tmp_path, rng):
    X = rng.uniform(-5, 5, size=(17, 115))
    labels = rng.integers(-1, 2, size=17).astype(np.int8)
    fm = FeatureMatrix(X, labels)
    p = tmp_path / "f.csv"
    save_csv(fm, str(p))
    got = load_csv(str(p))
    assert np.array_equal(got.X, X)  # repr round-trips floats exactly
    assert np.array_equal(got.labels, labels)


def test_feature_binary_round_trip(tmp_path, rng):
    X = rng.standard_normal((23, 115))
    labels = rng.integers(-1, 2, size=23).astype(np.int8)
    fm = FeatureMatrix(X, labels)
    p = tmp_path / "f.bin"
    save_binary(fm, str(p))
    got = load_binary(str(p))
    assert np.array_equal(got.X, X)
    assert np.array_equal(got.labels, labels)


def test_feature_csv_header_checked(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(FeatureError):
        load_csv(str(p))


def test_binary_size_checked(tmp_path, rng):
    fm = FeatureMatrix(rng.standard_normal((5, 115)), np.zeros(5, dtype=np.int8))
    p = tmp_path / "f.bin"
    save_binary(fm, str(p))
    with open(p, "ab") as fh:
        fh.write(b"\x00" * 7)
    with pytest.raises(FeatureError):
        load_binary(str(p))


def test_extract_labels(small_trace, small_features):
    assert small_features.n_rows == len(small_trace)
    want = np.array([-1 if r.label is None else r.label for r in small_trace], dtype=np.int8)
    assert np.array_equal(small_features.labels, want)


def test_synth_trace_deterministic():
    a = synth_trace(seed=5, benign_seconds=10.0, benign_pps=30.0, flood_start=8.0,
                    flood_seconds=1.0, flood_pps=100.0)
    b = synth_trace(seed=5, benign_seconds=10.0, benign_pps=30.0, flood_start=8.0,
                    flood_seconds=1.0, flood_pps=100.0)
    assert a == b
    assert all(x.ts <= y.ts for x, y in zip(a, a[1:]))
    assert any(r.label == 1 for r in a)
