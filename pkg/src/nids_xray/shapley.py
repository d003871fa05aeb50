"""Kernel SHAP attributions with an exact enumeration cross-check.

``explain`` fits the additive game g(z) = base + sum(z_j * phi_j) to
masked model evaluations by weighted least squares, with the two
constraint coalitions (empty and full) enforced exactly by eliminating
the last unknown, so base + sum(phi) always equals the model output.
``exact_shapley`` computes the classical permutation-weighted sum for
small feature counts; the two must agree on exact-mode problems.

Masked evaluation replaces absent features with background rows and
averages the model output over the background sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ShapError(Exception):
    pass


class ConstraintCoalitionError(ShapError):
    """Raised for coalition sizes 0 and M, which are constraints of the
    regression, not weighted samples."""


def shapley_kernel_weight(n_features: int, subset_size: int) -> float:
    """Kernel SHAP regression weight for a coalition of the given size."""
    M, s = n_features, subset_size
    if M < 2:
        raise ShapError("kernel weight needs at least 2 features")
    if s <= 0 or s >= M:
        raise ConstraintCoalitionError(
            "size-%d coalitions are regression constraints for M=%d" % (s, M)
        )
    return (M - 1) / (math.comb(M, s) * s * (M - s))


def masked_eval(score_fn, x, background, Z, chunk_rows: int = 262144) -> np.ndarray:
    """Value of each coalition row of Z: features with z=1 come from x,
    the rest from each background row; model outputs are averaged over
    the background."""
    x = np.asarray(x, dtype=np.float64).ravel()
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    Z = np.asarray(Z)
    B = background.shape[0]
    n_z = Z.shape[0]
    vals = np.empty(n_z)
    per_chunk = max(1, chunk_rows // B)
    for start in range(0, n_z, per_chunk):
        zc = Z[start : start + per_chunk]
        block = np.tile(background, (zc.shape[0], 1))
        for i in range(zc.shape[0]):
            cols = np.nonzero(zc[i])[0]
            block[i * B : (i + 1) * B, cols] = x[cols]
        out = np.asarray(score_fn(block), dtype=np.float64)
        vals[start : start + zc.shape[0]] = out.reshape(zc.shape[0], B).mean(axis=1)
    return vals


def _enumerate_masks(M: int) -> np.ndarray:
    if M > 20:
        raise ShapError(
            "exact enumeration capped at 20 features (2^%d coalitions); set a budget" % M
        )
    ints = np.arange(1, 2**M - 1, dtype=np.uint64)
    bits = (ints[:, None] >> np.arange(M, dtype=np.uint64)) & 1
    return bits.astype(np.int8)


def _sample_masks(M: int, budget: int, rng: np.random.Generator):
    """Paired kernel-weighted sampling; returns (masks, multiplicities)."""
    sizes = np.arange(1, M)
    p = (M - 1) / (sizes * (M - sizes))
    p = p / p.sum()
    n_pairs = max(1, budget // 2)
    drawn = rng.choice(sizes, size=n_pairs, p=p)
    seen: dict[bytes, int] = {}
    order: list[bytes] = []
    for s in drawn:
        z = np.zeros(M, dtype=np.int8)
        z[rng.choice(M, size=int(s), replace=False)] = 1
        for key in (z.tobytes(), (1 - z).tobytes()):
            if key in seen:
                seen[key] += 1
            else:
                seen[key] = 1
                order.append(key)
    masks = np.frombuffer(b"".join(order), dtype=np.int8).reshape(len(order), M)
    weights = np.array([seen[k] for k in order], dtype=np.float64)
    return masks, weights


@dataclass
class ShapExplanation:
    values: np.ndarray
    base_value: float
    fx: np.ndarray
    mode: str
    n_coalitions: int
    background_size: int
    feature_names: tuple[str, ...] | None = None
    singular_rows: tuple[int, ...] = ()

    def ranking(self) -> np.ndarray:
        """Feature indices by mean |phi| descending; ties keep index order."""
        mean_abs = np.mean(np.abs(self.values), axis=0)
        return np.lexsort((np.arange(mean_abs.size), -mean_abs))

    def efficiency_gap(self) -> float:
        return float(
            np.max(np.abs(self.base_value + self.values.sum(axis=1) - self.fx))
        )


def explain(
    score_fn,
    rows,
    background,
    budget: int | None = 2048,
    seed: int = 0,
    feature_names: tuple[str, ...] | None = None,
    chunk_rows: int = 262144,
) -> ShapExplanation:
    """Kernel SHAP attributions for each row.

    ``budget`` caps the number of coalition evaluations per row; None
    (or a budget covering them all) enumerates every proper coalition,
    which is only permitted up to 20 features.  One coalition set is
    drawn per call and reused for every row.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    M = rows.shape[1]
    if background.shape[1] != M:
        raise ShapError("background and rows disagree on feature count")
    if M < 2:
        raise ShapError("need at least 2 features to attribute")

    total = 2**M - 2 if M <= 62 else None
    exact = budget is None or (total is not None and budget >= total)
    if exact:
        Z = _enumerate_masks(M)
        sizes = Z.sum(axis=1)
        weights = np.array([shapley_kernel_weight(M, int(s)) for s in sizes])
        mode = "exact"
    else:
        rng = np.random.default_rng(seed)
        Z, weights = _sample_masks(M, budget, rng)
        mode = "sampled"

    base = float(np.mean(np.asarray(score_fn(background), dtype=np.float64)))
    fx = np.asarray(score_fn(rows), dtype=np.float64).ravel()

    sw = np.sqrt(weights)
    zM = Z[:, M - 1].astype(np.float64)
    A = Z[:, : M - 1].astype(np.float64) - zM[:, None]
    Aw = A * sw[:, None]

    values = np.empty((rows.shape[0], M))
    singular = []
    for r in range(rows.shape[0]):
        v = masked_eval(score_fn, rows[r], background, Z, chunk_rows=chunk_rows)
        D = fx[r] - base
        y = v - base - zM * D
        sol, _, rank, _ = np.linalg.lstsq(Aw, y * sw, rcond=None)
        if rank < M - 1:
            singular.append(r)
        values[r, : M - 1] = sol
        values[r, M - 1] = D - sol.sum()

    return ShapExplanation(
        values=values,
        base_value=base,
        fx=fx,
        mode=mode,
        n_coalitions=Z.shape[0],
        background_size=background.shape[0],
        feature_names=tuple(feature_names) if feature_names else None,
        singular_rows=tuple(singular),
    )


def exact_shapley(score_fn, x, background, chunk_masks: int = 4096) -> np.ndarray:
    """Classical Shapley values by full subset enumeration (M <= 12).

    Independent of the regression path: per-feature marginal
    contributions are averaged with |S|!(M-|S|-1)!/M! weights.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    M = x.size
    if M > 12:
        raise ShapError("exact_shapley is capped at 12 features, got %d" % M)
    B = background.shape[0]
    n_masks = 2**M

    v = np.empty(n_masks)
    for start in range(0, n_masks, chunk_masks):
        count = min(chunk_masks, n_masks - start)
        block = np.tile(background, (count, 1))
        for i in range(count):
            mask = start + i
            for j in range(M):
                if (mask >> j) & 1:
                    block[i * B : (i + 1) * B, j] = x[j]
        out = np.asarray(score_fn(block), dtype=np.float64)
        v[start : start + count] = out.reshape(count, B).mean(axis=1)

    fact = [math.factorial(i) for i in range(M + 1)]
    phi = np.zeros(M)
    for mask in range(n_masks):
        s = bin(mask).count("1")
        if s == M:
            continue
        w = fact[s] * fact[M - s - 1] / fact[M]
        for j in range(M):
            if not (mask >> j) & 1:
                phi[j] += w * (v[mask | (1 << j)] - v[mask])
    return phi


@dataclass
class ShapSummary:
    base_value: float
    rows: int
    table: tuple[tuple[str, float, float, float, float], ...]

    def render_text(self) -> str:
        lines = [
            "base value: %.6g over %d rows" % (self.base_value, self.rows),
            "%-28s %12s %12s %12s %12s" % ("feature", "mean|phi|", "mean phi", "min", "max"),
        ]
        for name, mean_abs, mean_signed, lo, hi in self.table:
            lines.append(
                "%-28s %12.6g %12.6g %12.6g %12.6g" % (name, mean_abs, mean_signed, lo, hi)
            )
        return "\n".join(lines)


def summarize(explanation: ShapExplanation, top_n: int = 10) -> ShapSummary:
    """Per-feature attribution table (mean |phi|, mean, min, max) for the
    top_n features by mean |phi|."""
    order = explanation.ranking()[:top_n]
    names = explanation.feature_names or tuple(
        "x[%d]" % i for i in range(explanation.values.shape[1])
    )
    table = tuple(
        (
            names[i],
            float(np.mean(np.abs(explanation.values[:, i]))),
            float(np.mean(explanation.values[:, i])),
            float(np.min(explanation.values[:, i])),
            float(np.max(explanation.values[:, i])),
        )
        for i in order
    )
    return ShapSummary(
        base_value=explanation.base_value,
        rows=explanation.values.shape[0],
        table=table,
    )
