"""Path-vs-SHAP agreement scoring."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nids_xray.agreement import AgreementError, agreement, alpha_score
from nids_xray.surrogate import fit_cart


def test_alpha_full_containment():
    assert alpha_score({1, 2}, {0, 1, 2, 3}) == 1.0


def test_alpha_half_containment():
    assert alpha_score({1, 2}, {1, 9}) == 0.5


def test_alpha_disjoint_zero():
    assert alpha_score({1, 2, 3}, {7, 8}) == 0.0


def test_alpha_mixed_subsets_average():
    # three subsets scoring 0.4, 0.6, 0.1 average to 0.3666...
    alphas = [alpha_score(set(range(5)), set(range(2))),
              alpha_score(set(range(5)), set(range(3))),
              alpha_score(set(range(10)), {0})]
    assert alphas == [0.4, 0.6, 0.1]
    assert np.mean(alphas) == pytest.approx(1.1 / 3)


def test_alpha_empty_path_undefined():
    with pytest.raises(AgreementError):
        alpha_score(set(), {1, 2})


@settings(max_examples=60, deadline=None)
@given(
    st.sets(st.integers(0, 20), min_size=1, max_size=8),
    st.sets(st.integers(0, 20), max_size=12),
    st.sets(st.integers(0, 20), max_size=5),
)
def test_alpha_bounds_and_topn_monotonicity(T, S, extra):
    a = alpha_score(T, S)
    assert 0.0 <= a <= 1.0
    # enlarging S never decreases alpha
    assert alpha_score(T, S | extra) >= a


def _partitioned_data(rng, n=2000):
    # features 0 and 1 define quadrants; 2 and 3 are noise
    X = rng.uniform(-1.0, 1.0, size=(n, 4))
    return X


def test_additive_path_teacher_alpha_one(rng):
    X = _partitioned_data(rng)
    # teacher reads exactly features 0 and 1
    score = lambda Z: 3.0 * Z[:, 0] + 2.0 * Z[:, 1]  # noqa: E731
    tree = fit_cart(X, score(X), max_depth=2, min_leaf=50)
    assert set(tree.feature[tree.feature >= 0]) <= {0, 1}
    rep = agreement(score, tree, X, background=X[:20], m=3, top_n=2,
                    min_rows=100, rows_per_subset=50, budget=None, seed=0)
    assert rep.average == 1.0
    assert all(s.alpha == 1.0 for s in rep.subsets)


def test_disjoint_teacher_alpha_zero(rng):
    X = _partitioned_data(rng)
    # tree splits on 0/1 but the explained score reads only 2/3; the
    # dummy axiom zeroes path features out of the SHAP top set
    y_tree = (X[:, 0] > 0.0).astype(np.float64) + (X[:, 1] > 0.0)
    tree = fit_cart(X, y_tree, max_depth=2, min_leaf=50)
    assert set(tree.feature[tree.feature >= 0]) <= {0, 1}
    score = lambda Z: 5.0 * Z[:, 2] - 4.0 * Z[:, 3]  # noqa: E731
    rep = agreement(score, tree, X, background=X[:20], m=3, top_n=2,
                    min_rows=100, rows_per_subset=50, budget=None, seed=0)
    assert rep.average == 0.0


def test_single_leaf_tree_excluded_with_warning(rng):
    X = _partitioned_data(rng, n=500)
    tree = fit_cart(X, np.zeros(500), min_leaf=1)  # single leaf, no path features
    score = lambda Z: Z[:, 0]  # noqa: E731
    rep = agreement(score, tree, X, background=X[:10], m=1, top_n=2,
                    min_rows=100, rows_per_subset=40, budget=None, seed=0)
    assert rep.average is None
    assert rep.m_scored == 0
    assert any("tests no features" in w for w in rep.warnings)
    assert rep.subsets[0].alpha is None
    assert rep.subsets[0].coverage == 500


def test_depth1_both_leaves_selected(rng):
    # 400/600-style split, min_rows=300, m=2: both leaves qualify
    X = np.empty((1000, 2))
    X[:, 0] = np.concatenate([np.zeros(400), np.ones(600)])
    X[:, 1] = rng.uniform(size=1000)
    y = (X[:, 0] > 0.5).astype(np.float64)
    tree = fit_cart(X, y, max_depth=1, min_leaf=100)
    score = lambda Z: Z[:, 0]  # noqa: E731
    rep = agreement(score, tree, X, background=X[:10], m=2, top_n=1,
                    min_rows=300, rows_per_subset=100, budget=None, seed=0)
    assert rep.m_selected == 2
    assert not rep.shortfall
    assert sorted(s.coverage for s in rep.subsets) == [400, 600]


def test_coverage_shortfall_flagged(rng):
    # leaf coverages {500, 310, 120} with min_rows=300, m=3: only 2 qualify
    X = np.empty((930, 2))
    X[:, 0] = np.concatenate([np.full(500, 0.0), np.full(310, 1.0), np.full(120, 2.0)])
    X[:, 1] = rng.uniform(size=930)
    y = np.concatenate([np.zeros(500), np.ones(310), np.full(120, 5.0)])
    tree = fit_cart(X, y, max_depth=2, min_leaf=50)
    assert sorted(tree.n_samples[tree.feature < 0].tolist()) == [120, 310, 500]
    score = lambda Z: Z[:, 0]  # noqa: E731
    rep = agreement(score, tree, X, background=X[:10], m=3, top_n=1,
                    min_rows=300, rows_per_subset=100, budget=None, seed=0)
    assert rep.m_selected == 2
    assert rep.shortfall
    assert rep.m_requested == 3
    assert any("only 2 of 3" in w for w in rep.warnings)
    assert sorted(s.coverage for s in rep.subsets) == [310, 500]


def test_agreement_deterministic(reference_adapter, small_features):
    X = small_features.X[:2000]
    tree = fit_cart(X, reference_adapter.predict(X).astype(np.float64),
                    max_depth=4, min_leaf=50)
    kw = dict(m=2, top_n=5, min_rows=200, rows_per_subset=50, budget=128, seed=9)
    a = agreement(reference_adapter.score, tree, X, background=X[:30], **kw)
    b = agreement(reference_adapter.score, tree, X, background=X[:30], **kw)
    assert a.as_dict() == b.as_dict()
    if a.average is not None:
        assert 0.0 <= a.average <= 1.0


def test_agreement_validation(rng):
    X = _partitioned_data(rng, n=200)
    tree = fit_cart(X, X[:, 0], max_depth=1, min_leaf=10)
    with pytest.raises(AgreementError):
        agreement(lambda Z: Z[:, 0], tree, X, background=X[:5], m=0)


def test_agreement_as_dict_round(rng):
    X = _partitioned_data(rng, n=600)
    score = lambda Z: Z[:, 0] * 2.0  # noqa: E731
    tree = fit_cart(X, score(X), max_depth=1, min_leaf=50)
    rep = agreement(score, tree, X, background=X[:10], m=2, top_n=1,
                    min_rows=100, rows_per_subset=30, budget=None, seed=1)
    d = rep.as_dict()
    assert d["m_requested"] == 2
    assert len(d["subsets"]) == rep.m_selected
    assert d["average"] == rep.average
