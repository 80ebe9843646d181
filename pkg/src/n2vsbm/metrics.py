"""Partition agreement scores for community recovery."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError

EXACT_SEARCH_MAX = 10


@dataclass(frozen=True)
class Partition:
    labels: np.ndarray
    k: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.ndim != 1:
            raise InputError("labels must be one-dimensional")
        if lab.size and (lab.min() < 0 or lab.max() >= self.k):
            raise InputError("every label must lie in [0, k)")
        object.__setattr__(self, "labels", lab)

    @classmethod
    def of(cls, labels) -> "Partition":
        if isinstance(labels, Partition):
            return labels
        lab = np.asarray(labels, dtype=np.int64)
        return cls(lab, int(lab.max()) + 1 if lab.size else 0)


def _pair(c, c_hat) -> tuple[Partition, Partition]:
    a, b = Partition.of(c), Partition.of(c_hat)
    if a.labels.shape != b.labels.shape:
        raise InputError(f"length mismatch: {a.labels.size} vs {b.labels.size}")
    if a.labels.size == 0:
        raise InputError("empty partitions")
    return a, b


def contingency(c, c_hat, square: bool = False) -> np.ndarray:
    """``C[a, b] = #{i : c(i) = a, c_hat(i) = b}``."""
    a, b = _pair(c, c_hat)
    ka, kb = a.k, b.k
    if square:
        ka = kb = max(ka, kb)
    C = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(C, (a.labels, b.labels), 1)
    return C


def _max_matching_exact(C: np.ndarray) -> int:
    """Maximum permutation weight by dynamic programming over subsets of columns."""
    k = C.shape[0]
    best = np.full(1 << k, -1, dtype=np.int64)
    best[0] = 0
    for mask in range(1 << k):
        if best[mask] < 0:
            continue
        row = bin(mask).count("1")
        if row == k:
            continue
        for col in range(k):
            bit = 1 << col
            if not mask & bit:
                val = best[mask] + C[row, col]
                if val > best[mask | bit]:
                    best[mask | bit] = val
    return int(best[-1])


def _max_matching(C: np.ndarray, method: str = "auto") -> int:
    if method == "exact" or (method == "auto" and C.shape[0] <= EXACT_SEARCH_MAX):
        return _max_matching_exact(C)
    r, s = linear_sum_assignment(C, maximize=True)
    return int(C[r, s].sum())


def misclassification(c, c_hat, method: str = "auto") -> float:
    """``min_sigma (1/n) #{i : c_hat(i) != sigma(c(i))}``."""
    C = contingency(c, c_hat, square=True)
    return float(1.0 - _max_matching(C, method) / C.sum())


def accuracy(c, c_hat) -> float:
    return float(1.0 - misclassification(c, c_hat))


def worst_case_misclassification(c, c_hat, common_permutation: bool = False) -> float:
    """Worst per-community error rate.

    By default each community picks its own best label (the permutation is
    minimized inside the max). With ``common_permutation`` a single relabeling
    is shared by all communities, which guarantees the result is at least
    :func:`misclassification`.
    """
    C = contingency(c, c_hat, square=True)
    sizes = C.sum(axis=1)
    present = np.zeros(C.shape[0], dtype=bool)
    present[: Partition.of(c).k] = True
    if np.any(sizes[present] == 0):
        raise InputError("empty true community")
    if not common_permutation:
        rates = 1.0 - C.max(axis=1)[present] / sizes[present]
        return float(rates.max())
    # min over sigma of max_k err_k(sigma): bisect over candidate thresholds
    k = C.shape[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        err = np.where(sizes[:, None] > 0, 1.0 - C / np.maximum(sizes[:, None], 1), 0.0)
    for t in np.unique(err):
        ok = (err <= t + 1e-15).astype(np.int64)
        r, s = linear_sum_assignment(ok, maximize=True)
        if ok[r, s].sum() == k:
            return float(t)
    return float(err.max())


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(c, c_hat) -> float:
    """Mutual information over the geometric mean of the two entropies (natural logs)."""
    C = contingency(c, c_hat).astype(np.float64)
    n = C.sum()
    ha, hb = _entropy(C.sum(1)), _entropy(C.sum(0))
    if ha == 0.0 or hb == 0.0:
        return 1.0 if ha == hb == 0.0 else 0.0
    pa, pb = C.sum(1) / n, C.sum(0) / n
    nz = C > 0
    pij = C[nz] / n
    mi = float((pij * np.log(pij / np.outer(pa, pb)[nz])).sum())
    return float(min(max(mi / np.sqrt(ha * hb), 0.0), 1.0))


def ari(c, c_hat) -> float:
    """Adjusted Rand index."""
    C = contingency(c, c_hat).astype(np.float64)
    n = C.sum()
    comb = lambda x: x * (x - 1) / 2.0
    s_ij = comb(C).sum()
    s_a, s_b = comb(C.sum(1)).sum(), comb(C.sum(0)).sum()
    total = comb(n)
    expected = s_a * s_b / total if total > 0 else 0.0
    max_index = 0.5 * (s_a + s_b)
    if max_index == expected:
        return 1.0
    return float((s_ij - expected) / (max_index - expected))


def evaluate_all(c, c_hat) -> dict[str, float]:
    L = misclassification(c, c_hat)
    return {"L": L, "L_worst": worst_case_misclassification(c, c_hat),
            "nmi": nmi(c, c_hat), "ari": ari(c, c_hat), "accuracy": 1.0 - L}
