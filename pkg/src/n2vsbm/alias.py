"""Vose alias tables for O(1) sampling from discrete distributions."""
from __future__ import annotations

import numba as nb
import numpy as np

from .errors import InputError


@nb.njit(cache=True)
def vose_fill(weights, prob, alias):
    """Fill ``prob``/``alias`` (same length as ``weights``) in place."""
    m = weights.size
    total = 0.0
    for i in range(m):
        total += weights[i]
    scaled = np.empty(m)
    small = np.empty(m, dtype=np.int64)
    large = np.empty(m, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(m):
        scaled[i] = weights[i] * m / total
        alias[i] = i
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        nl -= 1
        g = large[nl]
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            small[ns] = g
            ns += 1
        else:
            large[nl] = g
            nl += 1
    # leftovers are 1 up to rounding
    while nl > 0:
        nl -= 1
        prob[large[nl]] = 1.0
    while ns > 0:
        ns -= 1
        prob[small[ns]] = 1.0


@nb.njit(cache=True)
def alias_draw(prob, alias, base, m, u1, u2):
    """Draw an index in ``[0, m)`` from the table stored at ``prob[base:base+m]``."""
    i = int(u1 * m)
    if i >= m:
        i = m - 1
    if u2 < prob[base + i]:
        return i
    return alias[base + i]


class AliasTable:
    """Alias table over ``range(len(weights))``."""

    def __init__(self, weights):
        w = np.ascontiguousarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise InputError("alias table needs a non-empty weight vector")
        if (w < 0).any() or not np.isfinite(w).all() or w.sum() <= 0:
            raise InputError("alias weights must be finite, non-negative and not all zero")
        self.prob = np.empty(w.size)
        self.alias = np.empty(w.size, dtype=np.int64)
        vose_fill(w, self.prob, self.alias)

    def __len__(self):
        return self.prob.size

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        m = self.prob.size
        idx = np.minimum((rng.random(size) * m).astype(np.int64), m - 1)
        keep = rng.random(size) < self.prob[idx]
        return np.where(keep, idx, self.alias[idx])

    def probabilities(self) -> np.ndarray:
        """Reconstruct the normalized distribution encoded by the table."""
        m = self.prob.size
        out = self.prob / m
        np.add.at(out, self.alias, (1.0 - self.prob) / m)
        return out
