"""Agreement between the two explanation routes.

For each of the m largest surrogate-tree leaf subsets (by row coverage,
minimum coverage required), the features on the root-to-leaf path (T)
are compared against the top-n Kernel SHAP features for rows of that
subset (S); the per-subset score is |T intersect S| / |T| and the
headline number is their mean.  Subsets whose path tests no feature
cannot be scored and are excluded with a warning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import shapley
from .surrogate import SurrogateTree, enumerate_paths

DEFAULT_MIN_ROWS = 300
DEFAULT_M_SUBSETS = 3
DEFAULT_TOP_N = 10
DEFAULT_ROWS_PER_SUBSET = 1000


class AgreementError(Exception):
    pass


def alpha_score(path_features, shap_features) -> float:
    """Fraction of the tree path's features that SHAP also ranks highly."""
    T = frozenset(path_features)
    if not T:
        raise AgreementError("path tests no features; alpha is undefined")
    S = frozenset(shap_features)
    return len(T & S) / len(T)


@dataclass
class SubsetAgreement:
    leaf: int
    coverage: int
    path_features: tuple[int, ...]
    shap_top: tuple[int, ...]
    rows_explained: int
    alpha: float | None


@dataclass
class AgreementReport:
    average: float | None
    subsets: list[SubsetAgreement]
    m_requested: int
    m_selected: int
    m_scored: int
    min_rows: int
    top_n: int
    shortfall: bool
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "average": self.average,
            "m_requested": self.m_requested,
            "m_selected": self.m_selected,
            "m_scored": self.m_scored,
            "min_rows": self.min_rows,
            "top_n": self.top_n,
            "shortfall": self.shortfall,
            "warnings": list(self.warnings),
            "subsets": [
                {
                    "leaf": s.leaf,
                    "coverage": s.coverage,
                    "path_features": list(s.path_features),
                    "shap_top": list(s.shap_top),
                    "rows_explained": s.rows_explained,
                    "alpha": s.alpha,
                }
                for s in self.subsets
            ],
        }


def agreement(
    score_fn,
    tree: SurrogateTree,
    X: np.ndarray,
    background: np.ndarray,
    m: int = DEFAULT_M_SUBSETS,
    top_n: int = DEFAULT_TOP_N,
    min_rows: int = DEFAULT_MIN_ROWS,
    rows_per_subset: int = DEFAULT_ROWS_PER_SUBSET,
    budget: int | None = 2048,
    seed: int = 0,
) -> AgreementReport:
    """Score tree-vs-SHAP agreement on the m best-covered leaf subsets."""
    if m < 1:
        raise AgreementError("m must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    paths = enumerate_paths(tree, X)
    eligible = [p for p in paths if p.coverage >= min_rows]
    eligible.sort(key=lambda p: (-p.coverage, p.leaf))
    selected = eligible[:m]

    warnings: list[str] = []
    shortfall = len(selected) < m
    if shortfall:
        warnings.append(
            "only %d of %d requested subsets reach %d rows (leaf coverages: %s)"
            % (
                len(selected),
                m,
                min_rows,
                ", ".join(str(p.coverage) for p in sorted(paths, key=lambda q: -q.coverage)[:m]),
            )
        )

    rng = np.random.default_rng(seed)
    subsets: list[SubsetAgreement] = []
    alphas: list[float] = []
    for path in selected:
        rows_idx = path.rows
        if rows_idx.shape[0] > rows_per_subset:
            rows_idx = np.sort(rng.choice(rows_idx, size=rows_per_subset, replace=False))
        explanation = shapley.explain(
            score_fn, X[rows_idx], background, budget=budget, seed=seed
        )
        shap_top = tuple(int(i) for i in explanation.ranking()[:top_n])
        path_features = tuple(sorted(path.features))
        if path_features:
            a = alpha_score(path_features, shap_top)
            alphas.append(a)
        else:
            a = None
            warnings.append(
                "leaf %d path tests no features; subset excluded from the average" % path.leaf
            )
        subsets.append(
            SubsetAgreement(
                leaf=path.leaf,
                coverage=path.coverage,
                path_features=path_features,
                shap_top=shap_top,
                rows_explained=int(rows_idx.shape[0]),
                alpha=a,
            )
        )

    average = float(np.mean(alphas)) if alphas else None
    return AgreementReport(
        average=average,
        subsets=subsets,
        m_requested=m,
        m_selected=len(selected),
        m_scored=len(alphas),
        min_rows=min_rows,
        top_n=top_n,
        shortfall=shortfall,
        warnings=warnings,
    )
