"""CART surrogate: fitting, fidelity, distillation, pruning, paths."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nids_xray.surrogate import (
    SurrogateError,
    SurrogateTree,
    distill,
    enumerate_paths,
    feature_importance,
    fidelity,
    fit_cart,
    top_k_prune,
)

from oracles import best_split_brute, r_squared, route_rows


def _grid2d():
    xs = np.linspace(0.0, 1.0, 21)
    X = np.array([(a, b) for a in xs for b in xs])
    return X


def _depth2_rule(X):
    # axis-aligned rule: split on x0 at 0.5, then on x1 at 0.3 / 0.7
    out = np.where(
        X[:, 0] <= 0.5,
        np.where(X[:, 1] <= 0.3, 1.0, 2.0),
        np.where(X[:, 1] <= 0.7, 3.0, 4.0),
    )
    return out


def test_depth2_rule_recovered_exactly():
    X = _grid2d()
    y = _depth2_rule(X)
    tree = fit_cart(X, y, max_depth=4, min_leaf=1)
    assert np.array_equal(tree.predict(X), y)
    assert tree.depth <= 3


def test_constant_y_single_leaf():
    X = np.arange(10.0)[:, None]
    tree = fit_cart(X, np.full(10, 2.5), min_leaf=1)
    # degenerate shape: 1 node, depth 0, 1 leaf
    assert tree.node_count == 1
    assert tree.depth == 0
    assert tree.leaf_count == 1
    assert tree.value[0] == 2.5


def test_tie_broken_by_lower_feature_index():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    tree = fit_cart(X, y, min_leaf=1)
    assert tree.feature[0] == 0
    assert tree.threshold[0] == 1.5


def test_threshold_is_midpoint():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    y = np.array([0.0, 0.0, 5.0, 5.0])
    tree = fit_cart(X, y, min_leaf=1)
    assert tree.threshold[0] == 5.5


def test_best_split_matches_bruteforce(rng):
    for trial in range(20):
        n = int(rng.integers(8, 40))
        d = int(rng.integers(1, 5))
        X = rng.standard_normal((n, d))
        y = rng.standard_normal(n)
        min_leaf = int(rng.integers(1, 4))
        tree = fit_cart(X, y, max_depth=1, min_leaf=min_leaf)
        want = best_split_brute(X, y, min_leaf)
        if want is None:
            assert tree.node_count == 1, "trial %d" % trial
        else:
            _, f, thr = want
            assert tree.feature[0] == f, "trial %d" % trial
            assert tree.threshold[0] == pytest.approx(thr, rel=1e-12), "trial %d" % trial


def test_min_leaf_respected(rng):
    X = rng.standard_normal((60, 3))
    y = rng.standard_normal(60)
    tree = fit_cart(X, y, max_depth=30, min_leaf=7)
    leaf_sizes = tree.n_samples[tree.feature < 0]
    assert leaf_sizes.min() >= 7


def test_max_depth_respected(rng):
    X = rng.standard_normal((200, 3))
    y = rng.standard_normal(200)
    assert fit_cart(X, y, max_depth=2, min_leaf=1).depth <= 2
    assert fit_cart(X, y, max_depth=0, min_leaf=1).node_count == 1


def test_fit_validation(rng):
    X = rng.standard_normal((10, 2))
    with pytest.raises(SurrogateError):
        fit_cart(X, np.zeros(9))
    with pytest.raises(SurrogateError):
        fit_cart(X, np.zeros(10), min_leaf=0)
    with pytest.raises(SurrogateError):
        fit_cart(X, np.zeros(10), max_depth=-1)
    with pytest.raises(SurrogateError):
        fit_cart(np.zeros((0, 2)), np.zeros(0))


def test_preorder_layout(rng):
    X = rng.standard_normal((100, 4))
    y = rng.standard_normal(100)
    tree = fit_cart(X, y, max_depth=4, min_leaf=5)
    for i in range(tree.node_count):
        if tree.feature[i] >= 0:
            assert tree.left[i] == i + 1  # preorder: left child is adjacent
            assert tree.right[i] > tree.left[i]
    assert tree.leaf_count == tree.internal_count + 1


# -- fidelity ---------------------------------------------------------------


def test_fidelity_identical_is_one(rng):
    X = rng.standard_normal((50, 3))
    y = rng.standard_normal(50)
    tree = fit_cart(X, y, max_depth=50, min_leaf=1)
    assert fidelity(tree, X, lambda Z: tree.predict(Z)) == 1.0


def test_fidelity_mean_predictor_is_zero():
    X = np.arange(4.0)[:, None]
    teacher = lambda Z: np.array([0.0, 1.0, 1.0, 0.0])  # noqa: E731
    tree = fit_cart(X, np.full(4, 0.5), min_leaf=1)
    assert fidelity(tree, X, teacher) == 0.0


def test_fidelity_inverted_labels_is_minus_three():
    X = np.arange(4.0)[:, None]
    tree = fit_cart(X, np.array([1.0, 0.0, 0.0, 1.0]), min_leaf=1)
    teacher = lambda Z: np.array([0.0, 1.0, 1.0, 0.0])  # noqa: E731
    assert fidelity(tree, X, teacher) == -3.0


def test_fidelity_constant_teacher():
    X = np.arange(6.0)[:, None]
    tree_match = fit_cart(X, np.full(6, 3.0), min_leaf=1)
    tree_miss = fit_cart(X, np.full(6, 4.0), min_leaf=1)
    teacher = lambda Z: np.full(Z.shape[0], 3.0)  # noqa: E731
    assert fidelity(tree_match, X, teacher) == 1.0
    assert fidelity(tree_miss, X, teacher) == 0.0


def test_fidelity_matches_oracle(rng):
    X = rng.standard_normal((80, 4))
    y = rng.standard_normal(80)
    tree = fit_cart(X, y, max_depth=3, min_leaf=5)
    teacher = lambda Z: y  # noqa: E731
    want = r_squared(y, tree.predict(X))
    assert fidelity(tree, X, teacher) == pytest.approx(want, rel=1e-12)


# -- distillation -------------------------------------------------------------


def _tree_teacher(rng):
    # a genuine CART teacher on an integer grid: thresholds fall on k+0.5,
    # so a student seeing every integer value recovers them exactly
    X = rng.integers(0, 10, size=(2000, 4)).astype(np.float64)
    y = (X[:, 0] > 4.0) * 2.0 + (X[:, 1] > 6.0) + (X[:, 2] > 2.0) * 4.0
    teacher = fit_cart(X, y, max_depth=3, min_leaf=5)
    return X, teacher


def test_self_distillation_reaches_one(rng):
    X, teacher = _tree_teacher(rng)
    tree, report = distill(
        teacher, X, sample_fraction=0.5, iterations=5, max_depth=6, min_leaf=2, seed=3
    )
    assert report.fidelity == 1.0
    assert report.stability == 1.0
    assert np.array_equal(tree.predict(X), teacher.predict(X))


def test_distill_deterministic(rng):
    X, teacher = _tree_teacher(rng)
    a_tree, a_rep = distill(teacher, X, sample_fraction=0.3, iterations=1, seed=11)
    b_tree, b_rep = distill(teacher, X, sample_fraction=0.3, iterations=1, seed=11)
    assert a_tree.to_dict() == b_tree.to_dict()
    assert a_rep.as_dict() == b_rep.as_dict()


def test_distill_report_shape(rng):
    X, teacher = _tree_teacher(rng)
    tree, report = distill(teacher, X, sample_fraction=0.4, iterations=4, seed=0,
                           stability_k=2, teacher_name="toy")
    assert report.teacher_name == "toy"
    assert len(report.fidelities) == 4
    assert report.fidelity == max(report.fidelities)
    assert 0.0 <= report.stability <= 1.0
    assert report.tree_nodes == tree.node_count
    assert report.rows_per_iteration == int(0.4 * X.shape[0])
    d = report.as_dict()
    assert d["fidelity"] == report.fidelity


def test_distill_validation(rng):
    X, teacher = _tree_teacher(rng)
    with pytest.raises(SurrogateError):
        distill(teacher, X, sample_fraction=0.0)
    with pytest.raises(SurrogateError):
        distill(teacher, X, iterations=0)
    with pytest.raises(SurrogateError):
        distill(teacher, X[:20], sample_fraction=0.1, min_leaf=5)  # sample too small


def test_distill_reference_detector(reference_adapter, small_features):
    tree, report = distill(
        reference_adapter,
        small_features.X,
        sample_fraction=0.3,
        iterations=5,
        max_depth=12,
        seed=0,
        feature_names=small_features.columns,
        teacher_name=reference_adapter.name,
    )
    assert report.fidelity > 0.7
    assert report.teacher_name == "reference"
    assert all(name in small_features.columns for name, _ in report.top_features)


# -- pruning ------------------------------------------------------------------


def test_prune_k1_is_root_stump(rng):
    X = rng.standard_normal((300, 5))
    y = rng.standard_normal(300)
    tree = fit_cart(X, y, max_depth=8, min_leaf=5)
    stump = top_k_prune(tree, 1)
    assert stump.internal_count == 1
    assert stump.depth == 1
    assert stump.feature[0] == tree.feature[0]
    assert stump.threshold[0] == tree.threshold[0]
    assert stump.pruned_to == 1


def _chain_tree():
    X = np.arange(8.0)[:, None]
    y = 2.0 ** np.arange(8)
    tree = fit_cart(X, y, max_depth=10, min_leaf=1)
    return tree


def test_prune_chain_k2():
    tree = _chain_tree()
    assert tree.internal_count == 7  # doubling staircase peels one row per split
    pruned = top_k_prune(tree, 2)
    assert pruned.internal_count == 2


def test_prune_k_at_least_internal_count_is_identity(rng):
    X = rng.standard_normal((200, 3))
    y = rng.standard_normal(200)
    tree = fit_cart(X, y, max_depth=5, min_leaf=10)
    same = top_k_prune(tree, tree.internal_count)
    assert np.array_equal(same.feature, tree.feature)
    assert np.array_equal(same.value, tree.value)
    assert np.array_equal(same.n_samples, tree.n_samples)
    more = top_k_prune(tree, tree.internal_count + 50)
    assert np.array_equal(more.feature, tree.feature)


def test_prune_monotone_and_connected(rng):
    X = rng.standard_normal((400, 6))
    y = rng.standard_normal(400)
    tree = fit_cart(X, y, max_depth=10, min_leaf=5)
    prev = tree
    for k in range(tree.internal_count, 0, -1):
        p = top_k_prune(tree, k)
        assert p.node_count <= prev.node_count
        assert p.depth <= prev.depth
        assert p.leaf_count <= prev.leaf_count
        assert p.internal_count <= k
        assert p.leaf_count == p.internal_count + 1
        prev = p


def test_prune_severed_branch_predicts_subtree_mean(rng):
    X = rng.standard_normal((500, 4))
    y = rng.standard_normal(500)
    tree = fit_cart(X, y, max_depth=6, min_leaf=5)
    stump = top_k_prune(tree, 1)
    # each stump leaf predicts the training mean of the original branch
    mask = X[:, tree.feature[0]] <= tree.threshold[0]
    assert stump.value[1] == pytest.approx(y[mask].mean(), rel=1e-9)
    assert stump.value[2] == pytest.approx(y[~mask].mean(), rel=1e-9)


def test_prune_validation(rng):
    tree = _chain_tree()
    with pytest.raises(SurrogateError):
        top_k_prune(tree, 0)


# -- paths --------------------------------------------------------------------


def test_paths_single_leaf(rng):
    X = rng.standard_normal((30, 2))
    tree = fit_cart(X, np.zeros(30), min_leaf=1)
    paths = enumerate_paths(tree, X)
    assert len(paths) == 1
    assert paths[0].predicates == []
    assert paths[0].coverage == 30
    assert np.array_equal(paths[0].rows, np.arange(30))


def test_paths_depth1_partition(rng):
    X = rng.standard_normal((100, 1))
    y = (X[:, 0] > 0.0).astype(np.float64)
    tree = fit_cart(X, y, max_depth=1, min_leaf=1)
    paths = enumerate_paths(tree, X)
    assert len(paths) == 2
    thr = tree.threshold[0]
    by_leaf = {p.leaf: p for p in paths}
    left, right = tree.left[0], tree.right[0]
    assert np.array_equal(by_leaf[left].rows, np.nonzero(X[:, 0] <= thr)[0])
    assert np.array_equal(by_leaf[right].rows, np.nonzero(X[:, 0] > thr)[0])
    assert by_leaf[left].predicates == [(0, "<=", pytest.approx(thr))]
    assert by_leaf[right].predicates == [(0, ">", pytest.approx(thr))]


def test_paths_partition_random_tree(rng):
    X = rng.standard_normal((300, 5))
    y = rng.standard_normal(300)
    tree = fit_cart(X, y, max_depth=7, min_leaf=3)
    paths = enumerate_paths(tree, X)
    all_rows = np.concatenate([p.rows for p in paths])
    assert sorted(all_rows.tolist()) == list(range(300))  # union + disjoint
    # predicates route exactly like apply()
    assert np.array_equal(tree.apply(X), route_rows(tree, X))
    for p in paths:
        for row in p.rows[:10]:
            for f, op, thr in p.predicates:
                if op == "<=":
                    assert X[row, f] <= thr
                else:
                    assert X[row, f] > thr


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_paths_partition_property(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(5, 80))
    d = int(r.integers(1, 4))
    X = r.standard_normal((n, d))
    y = r.standard_normal(n)
    tree = fit_cart(X, y, max_depth=5, min_leaf=1)
    paths = enumerate_paths(tree, X)
    seen = np.zeros(n, dtype=int)
    for p in paths:
        seen[p.rows] += 1
    assert np.all(seen == 1)


# -- serialization -------------------------------------------------------------


def test_tree_json_roundtrip(tmp_path, rng):
    X = rng.standard_normal((150, 4))
    y = rng.standard_normal(150)
    tree = fit_cart(X, y, max_depth=4, min_leaf=5,
                    feature_names=("a", "b", "c", "d"))
    tree.fidelity = 0.9
    p = tmp_path / "t.json"
    tree.save_json(str(p))
    got = SurrogateTree.load_json(str(p))
    assert got.to_dict() == tree.to_dict()
    assert np.array_equal(got.predict(X), tree.predict(X))
    assert got.feature_names == ("a", "b", "c", "d")
    assert got.fidelity == 0.9


def test_tree_dot_output(rng):
    X = rng.standard_normal((60, 2))
    y = rng.standard_normal(60)
    tree = fit_cart(X, y, max_depth=2, min_leaf=5, feature_names=("alpha", "beta"))
    dot = tree.to_dot()
    assert dot.startswith("digraph")
    assert "alpha" in dot or "beta" in dot


def test_feature_importance_sums_gain(rng):
    X = rng.standard_normal((200, 3))
    y = rng.standard_normal(200)
    tree = fit_cart(X, y, max_depth=4, min_leaf=10)
    agg = feature_importance(tree, 3)
    internal = tree.feature >= 0
    total = float(np.sum(tree.n_samples[internal] * tree.impurity_decrease[internal]))
    assert agg.sum() == pytest.approx(total, rel=1e-12)
    assert np.all(agg >= 0.0)
