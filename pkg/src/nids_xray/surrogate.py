"""Decision-tree surrogates for trained detectors.

A greedy variance-reduction CART is fitted to a detector's outputs on
sampled rows, scored by R-squared fidelity against the detector on held
out rows, repeated over seeded iterations, and summarized in a
:class:`TrustReport`.  Trees can be shrunk to their k most informative
splits for presentation (:func:`top_k_prune`) and walked as explicit
root-to-leaf predicate paths.

Rows with ``x[feature] <= threshold`` go to the left child.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# Gains at or below this fraction of the parent's squared-error mass are
# treated as numerical noise, not real splits.
_GAIN_EPS = 1e-12

DEFAULT_MAX_DEPTH = 100
DEFAULT_MIN_LEAF = 5


class SurrogateError(Exception):
    pass


@dataclass
class SurrogateTree:
    """Flat-array binary regression tree in preorder layout.

    ``feature[i] == -1`` marks a leaf; ``impurity_decrease`` is the
    per-sample drop in squared error at the node's split (0 at leaves),
    so ``n_samples * impurity_decrease`` is the total error removed.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity_decrease: np.ndarray
    feature_names: tuple[str, ...] | None = None
    fidelity: float | None = None
    pruned_to: int | None = None

    @property
    def node_count(self) -> int:
        return self.feature.shape[0]

    @property
    def leaf_count(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def internal_count(self) -> int:
        return self.node_count - self.leaf_count

    @property
    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if self.node_count else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index for every row."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return node
            rows = np.nonzero(active)[0]
            f = feat[active]
            go_left = X[rows, f] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def path_to(self, leaf: int) -> list[tuple[int, str, float]]:
        """Predicates on the root-to-leaf path as (feature, op, threshold)."""
        parent = np.full(self.node_count, -1, dtype=np.int64)
        side = np.zeros(self.node_count, dtype=np.int8)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                parent[self.left[i]] = i
                side[self.left[i]] = 0
                parent[self.right[i]] = i
                side[self.right[i]] = 1
        preds = []
        node = leaf
        while parent[node] >= 0:
            p = int(parent[node])
            op = "<=" if side[node] == 0 else ">"
            preds.append((int(self.feature[p]), op, float(self.threshold[p])))
            node = p
        preds.reverse()
        return preds

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "feature": int(self.feature[i]),
                    "threshold": None if self.feature[i] < 0 else float(self.threshold[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                    "value": float(self.value[i]),
                    "n_samples": int(self.n_samples[i]),
                    "impurity_decrease": float(self.impurity_decrease[i]),
                }
                for i in range(self.node_count)
            ],
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "fidelity": self.fidelity,
            "pruned_to": self.pruned_to,
        }

    @staticmethod
    def from_dict(data: dict) -> "SurrogateTree":
        nodes = data["nodes"]
        n = len(nodes)
        tree = SurrogateTree(
            feature=np.array([nd["feature"] for nd in nodes], dtype=np.int32),
            threshold=np.array(
                [nd["threshold"] if nd["threshold"] is not None else math.nan for nd in nodes],
                dtype=np.float64,
            ),
            left=np.array([nd["left"] for nd in nodes], dtype=np.int32),
            right=np.array([nd["right"] for nd in nodes], dtype=np.int32),
            value=np.array([nd["value"] for nd in nodes], dtype=np.float64),
            n_samples=np.array([nd["n_samples"] for nd in nodes], dtype=np.int64),
            impurity_decrease=np.array(
                [nd["impurity_decrease"] for nd in nodes], dtype=np.float64
            ),
            feature_names=tuple(data["feature_names"]) if data.get("feature_names") else None,
            fidelity=data.get("fidelity"),
            pruned_to=data.get("pruned_to"),
        )
        return tree

    def save_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load_json(path: str) -> "SurrogateTree":
        with open(path, "r", encoding="utf-8") as fh:
            return SurrogateTree.from_dict(json.load(fh))

    def _name(self, f: int) -> str:
        if self.feature_names and 0 <= f < len(self.feature_names):
            return self.feature_names[f]
        return "x[%d]" % f

    def to_dot(self) -> str:
        lines = ["digraph surrogate {", "  node [shape=box];"]
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                label = "%s <= %.6g\\nn=%d" % (
                    self._name(int(self.feature[i])),
                    self.threshold[i],
                    self.n_samples[i],
                )
                lines.append('  n%d [label="%s"];' % (i, label))
                lines.append("  n%d -> n%d [label=yes];" % (i, self.left[i]))
                lines.append("  n%d -> n%d [label=no];" % (i, self.right[i]))
            else:
                lines.append(
                    '  n%d [label="value=%.6g\\nn=%d"];' % (i, self.value[i], self.n_samples[i])
                )
        lines.append("}")
        return "\n".join(lines)


def _best_split(X, y, idx, min_leaf, s1, s2):
    """Best (gain, feature, threshold) for one node, or None.

    Ties resolve to the lowest feature index, then the lowest threshold:
    features are scanned in index order with strict improvement, and the
    candidate scan within a feature is in ascending threshold order.
    """
    n = idx.shape[0]
    parent_sse = s2 - s1 * s1 / n
    eps = _GAIN_EPS * max(1.0, abs(parent_sse))
    if parent_sse <= eps:
        return None
    best = None
    yv = y[idx]
    for f in range(X.shape[1]):
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs_s = xs[order]
        ys = yv[order]
        c1 = np.cumsum(ys)
        c2 = np.cumsum(ys * ys)
        pos = np.arange(min_leaf - 1, n - min_leaf)
        if pos.size == 0:
            continue
        movable = xs_s[pos] < xs_s[pos + 1]
        pos = pos[movable]
        if pos.size == 0:
            continue
        nl = pos + 1.0
        nr = n - nl
        sse_l = c2[pos] - c1[pos] * c1[pos] / nl
        sse_r = (s2 - c2[pos]) - (s1 - c1[pos]) * (s1 - c1[pos]) / nr
        gain = parent_sse - sse_l - sse_r
        gi = int(np.argmax(gain))
        g = float(gain[gi])
        if g <= eps:
            continue
        if best is None or g > best[0]:
            p = pos[gi]
            thr = float((xs_s[p] + xs_s[p + 1]) / 2.0)
            # the midpoint of two values 1 ulp apart rounds up to the
            # higher one, which would send the right rows left
            if thr >= xs_s[p + 1]:
                thr = float(xs_s[p])
            best = (g, f, thr)
    return best


def fit_cart(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int = DEFAULT_MAX_DEPTH,
    min_leaf: int = DEFAULT_MIN_LEAF,
    feature_names: tuple[str, ...] | None = None,
) -> SurrogateTree:
    """Greedy variance-reduction regression tree."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise SurrogateError("X must be 2-d")
    if y.shape != (X.shape[0],):
        raise SurrogateError("y length does not match X rows")
    if X.shape[0] < 1:
        raise SurrogateError("cannot fit a tree on zero rows")
    if min_leaf < 1:
        raise SurrogateError("min_leaf must be >= 1")
    if max_depth < 0:
        raise SurrogateError("max_depth must be >= 0")
    if feature_names is not None and len(feature_names) != X.shape[1]:
        raise SurrogateError("feature_names length does not match X columns")

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    n_samples: list[int] = []
    impurity_decrease: list[float] = []

    # preorder: children are materialized immediately after their parent
    # via a stack that pushes the right child first
    stack = [(np.arange(X.shape[0]), 0, -1, False)]
    while stack:
        idx, depth, parent, is_right = stack.pop()
        node_id = len(feature)
        if parent >= 0:
            if is_right:
                right[parent] = node_id
            else:
                left[parent] = node_id
        yv = y[idx]
        n = idx.shape[0]
        s1 = float(yv.sum())
        s2 = float((yv * yv).sum())
        feature.append(-1)
        threshold.append(math.nan)
        left.append(-1)
        right.append(-1)
        value.append(s1 / n)
        n_samples.append(n)
        impurity_decrease.append(0.0)

        if depth >= max_depth or n < 2 * min_leaf:
            continue
        best = _best_split(X, y, idx, min_leaf, s1, s2)
        if best is None:
            continue
        gain, f, thr = best
        mask = X[idx, f] <= thr
        feature[node_id] = f
        threshold[node_id] = thr
        impurity_decrease[node_id] = gain / n
        stack.append((idx[~mask], depth + 1, node_id, True))
        stack.append((idx[mask], depth + 1, node_id, False))

    return SurrogateTree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value, dtype=np.float64),
        n_samples=np.array(n_samples, dtype=np.int64),
        impurity_decrease=np.array(impurity_decrease, dtype=np.float64),
        feature_names=tuple(feature_names) if feature_names else None,
    )


def _teacher_outputs(teacher, X: np.ndarray) -> np.ndarray:
    fn = teacher.predict if hasattr(teacher, "predict") else teacher
    return np.asarray(fn(X), dtype=np.float64)


def fidelity(tree: SurrogateTree, X_eval: np.ndarray, teacher) -> float:
    """R-squared of the tree against the teacher on X_eval.

    1 is a perfect mimic, 0 matches the constant mean, negative is worse
    than the mean.  A constant teacher gives 1 when reproduced exactly
    and 0 otherwise.
    """
    y_t = _teacher_outputs(teacher, X_eval)
    if y_t.size == 0:
        raise SurrogateError("fidelity needs at least one evaluation row")
    y_s = tree.predict(X_eval)
    mean = float(np.mean(y_t))
    ss_tot = float(np.sum((y_t - mean) ** 2))
    ss_res = float(np.sum((y_t - y_s) ** 2))
    # noise floor below which the teacher counts as constant
    tol = y_t.size * (1e-12 * max(1.0, abs(mean))) ** 2
    if ss_tot <= tol:
        return 1.0 if ss_res <= tol else 0.0
    return 1.0 - ss_res / ss_tot


@dataclass
class TrustReport:
    """Distillation summary: how well and how stably a small tree mimics
    the detector."""

    teacher_name: str
    iterations: int
    sample_fraction: float
    rows_per_iteration: int
    best_iteration: int
    fidelity: float
    fidelities: tuple[float, ...]
    fidelity_mean: float
    fidelity_std: float
    tree_nodes: int
    tree_depth: int
    tree_leaves: int
    top_features: tuple[tuple[str, float], ...]
    stability: float
    stability_k: int

    def as_dict(self) -> dict:
        return {
            "teacher": self.teacher_name,
            "iterations": self.iterations,
            "sample_fraction": self.sample_fraction,
            "rows_per_iteration": self.rows_per_iteration,
            "best_iteration": self.best_iteration,
            "fidelity": self.fidelity,
            "fidelities": list(self.fidelities),
            "fidelity_mean": self.fidelity_mean,
            "fidelity_std": self.fidelity_std,
            "tree_nodes": self.tree_nodes,
            "tree_depth": self.tree_depth,
            "tree_leaves": self.tree_leaves,
            "top_features": [[name, val] for name, val in self.top_features],
            "stability": self.stability,
            "stability_k": self.stability_k,
        }


def feature_importance(tree: SurrogateTree, n_features: int) -> np.ndarray:
    """Total squared-error reduction attributed to each feature."""
    agg = np.zeros(n_features)
    internal = tree.feature >= 0
    np.add.at(
        agg,
        tree.feature[internal],
        tree.n_samples[internal] * tree.impurity_decrease[internal],
    )
    return agg


def _top_k_features(agg: np.ndarray, k: int) -> tuple[int, ...]:
    order = np.lexsort((np.arange(agg.size), -agg))
    return tuple(int(i) for i in order[:k])


def distill(
    teacher,
    X: np.ndarray,
    sample_fraction: float = 0.3,
    iterations: int = 50,
    max_depth: int = DEFAULT_MAX_DEPTH,
    min_leaf: int = DEFAULT_MIN_LEAF,
    holdout_fraction: float = 0.3,
    stability_k: int = 3,
    seed: int = 0,
    feature_names: tuple[str, ...] | None = None,
    teacher_name: str | None = None,
) -> tuple[SurrogateTree, TrustReport]:
    """Repeatedly sample rows, label them with the teacher, fit a tree on
    70% and score fidelity on the disjoint 30%; keep the best tree."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 0.0 < sample_fraction <= 1.0:
        raise SurrogateError("sample_fraction must be in (0, 1]")
    if not 0.0 < holdout_fraction < 1.0:
        raise SurrogateError("holdout_fraction must be in (0, 1)")
    if iterations < 1:
        raise SurrogateError("iterations must be >= 1")
    s = int(sample_fraction * n)
    n_hold = max(1, int(holdout_fraction * s))
    n_fit = s - n_hold
    if n_fit < 2 * min_leaf:
        raise SurrogateError(
            "sample of %d rows is too small to fit a tree (needs >= %d fit rows)"
            % (s, 2 * min_leaf + n_hold)
        )
    rng = np.random.default_rng(seed)

    best_tree = None
    best_fid = -np.inf
    best_iter = -1
    fidelities = []
    top_sets = []
    for it in range(iterations):
        take = rng.choice(n, size=s, replace=False)
        Xs = X[take]
        ys = _teacher_outputs(teacher, Xs)
        tree = fit_cart(
            Xs[:n_fit], ys[:n_fit], max_depth=max_depth, min_leaf=min_leaf,
            feature_names=feature_names,
        )
        y_hold = ys[n_fit:]
        y_pred = tree.predict(Xs[n_fit:])
        mean = float(np.mean(y_hold))
        ss_tot = float(np.sum((y_hold - mean) ** 2))
        ss_res = float(np.sum((y_hold - y_pred) ** 2))
        tol = y_hold.size * (1e-12 * max(1.0, abs(mean))) ** 2
        if ss_tot <= tol:
            fid = 1.0 if ss_res <= tol else 0.0
        else:
            fid = 1.0 - ss_res / ss_tot
        fidelities.append(float(fid))
        top_sets.append(frozenset(_top_k_features(feature_importance(tree, X.shape[1]), stability_k)))
        if fid > best_fid:
            best_fid = float(fid)
            best_tree = tree
            best_iter = it

    best_tree.fidelity = best_fid
    agg = feature_importance(best_tree, X.shape[1])
    order = _top_k_features(agg, min(10, X.shape[1]))
    names = feature_names or tuple("x[%d]" % i for i in range(X.shape[1]))
    top_features = tuple((names[i], float(agg[i])) for i in order if agg[i] > 0.0)
    best_set = top_sets[best_iter]
    stability = float(np.mean([ts == best_set for ts in top_sets]))
    fid_arr = np.array(fidelities)
    report = TrustReport(
        teacher_name=teacher_name or getattr(teacher, "name", "teacher"),
        iterations=iterations,
        sample_fraction=sample_fraction,
        rows_per_iteration=s,
        best_iteration=best_iter,
        fidelity=best_fid,
        fidelities=tuple(fidelities),
        fidelity_mean=float(fid_arr.mean()),
        fidelity_std=float(fid_arr.std()),
        tree_nodes=best_tree.node_count,
        tree_depth=best_tree.depth,
        tree_leaves=best_tree.leaf_count,
        top_features=top_features,
        stability=stability,
        stability_k=stability_k,
    )
    return best_tree, report


def top_k_prune(tree: SurrogateTree, k: int) -> SurrogateTree:
    """Keep the k most informative splits reachable from the root.

    Splits are ranked by total squared-error reduction
    (n_samples * impurity_decrease) and adopted greedily: a split is
    eligible once its parent split is kept, so the result is a connected
    subtree rooted at the root.  Severed branches collapse to leaves
    predicting the node mean.  k = 1 always yields the root stump.
    """
    if k < 1:
        raise SurrogateError("k must be >= 1")
    score = tree.n_samples * tree.impurity_decrease
    kept: set[int] = set()
    frontier: list[int] = []
    if tree.feature[0] >= 0:
        frontier.append(0)
    for _ in range(k):
        if not frontier:
            break
        pick = max(frontier, key=lambda i: (score[i], -i))
        frontier.remove(pick)
        kept.add(pick)
        for child in (int(tree.left[pick]), int(tree.right[pick])):
            if tree.feature[child] >= 0:
                frontier.append(child)

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    n_samples: list[int] = []
    impurity: list[float] = []

    stack = [(0, -1, False)]
    while stack:
        old, parent, is_right = stack.pop()
        new_id = len(feature)
        if parent >= 0:
            if is_right:
                right[parent] = new_id
            else:
                left[parent] = new_id
        keep = old in kept
        feature.append(int(tree.feature[old]) if keep else -1)
        threshold.append(float(tree.threshold[old]) if keep else math.nan)
        left.append(-1)
        right.append(-1)
        value.append(float(tree.value[old]))
        n_samples.append(int(tree.n_samples[old]))
        impurity.append(float(tree.impurity_decrease[old]) if keep else 0.0)
        if keep:
            stack.append((int(tree.right[old]), new_id, True))
            stack.append((int(tree.left[old]), new_id, False))

    return SurrogateTree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value, dtype=np.float64),
        n_samples=np.array(n_samples, dtype=np.int64),
        impurity_decrease=np.array(impurity, dtype=np.float64),
        feature_names=tree.feature_names,
        fidelity=None,
        pruned_to=k,
    )


@dataclass
class LeafPath:
    leaf: int
    predicates: list[tuple[int, str, float]]
    value: float
    n_train: int
    rows: np.ndarray | None = None
    features: frozenset[int] = field(default_factory=frozenset)

    @property
    def coverage(self) -> int:
        return 0 if self.rows is None else int(self.rows.shape[0])


def enumerate_paths(tree: SurrogateTree, X: np.ndarray | None = None) -> list[LeafPath]:
    """All root-to-leaf paths, optionally with the rows of X each covers."""
    leaf_rows: dict[int, np.ndarray] = {}
    if X is not None:
        assignment = tree.apply(X)
        for leaf in np.unique(assignment):
            leaf_rows[int(leaf)] = np.nonzero(assignment == leaf)[0]
    paths = []
    for i in range(tree.node_count):
        if tree.feature[i] >= 0:
            continue
        preds = tree.path_to(i)
        paths.append(
            LeafPath(
                leaf=i,
                predicates=preds,
                value=float(tree.value[i]),
                n_train=int(tree.n_samples[i]),
                rows=leaf_rows.get(i) if X is not None else None,
                features=frozenset(f for f, _, _ in preds),
            )
        )
    return paths
