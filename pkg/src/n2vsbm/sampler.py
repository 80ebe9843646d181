"""node2vec positive pairs (second-order walks) and negative pairs (unigram law)."""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
import scipy.sparse as sp

from .alias import AliasTable, alias_draw, vose_fill
from .errors import InputError
from .graph import Graph

# per-edge alias tables are only built when sum(deg^2) stays below this many entries
ALIAS_BUDGET = 20_000_000

METHOD_UNIFORM = 0
METHOD_ALIAS = 1
METHOD_ONLINE = 2
_METHODS = {"uniform": METHOD_UNIFORM, "alias": METHOD_ALIAS, "online": METHOD_ONLINE}


@dataclass(frozen=True)
class WalkConfig:
    p: float = 1.0
    q: float = 1.0
    walk_len_k: int = 80
    window_W: int = 10
    walks_per_start: int = 10
    negatives_l: int = 5
    unigram_alpha: float = 0.75
    start_mode: str = "practical"
    """``practical``: walks_per_start walks from every vertex; ``theory``: uniform directed edges."""
    exclude_center: bool = False
    """Drop the current center from the unigram support (supplement variant)."""

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise InputError("p and q must be positive")
        if self.walk_len_k < 1 or self.window_W < 1:
            raise InputError("walk length and window must be >= 1")
        if self.negatives_l < 0 or self.walks_per_start < 1:
            raise InputError("negatives_l must be >= 0 and walks_per_start >= 1")
        if self.start_mode not in ("practical", "theory"):
            raise InputError(f"unknown start mode {self.start_mode!r}")

    @property
    def is_deepwalk(self) -> bool:
        return self.p == 1.0 and self.q == 1.0


@dataclass(frozen=True)
class PairStream:
    """Positive and negative (center, context) pairs, one row per occurrence."""

    positive: np.ndarray
    negative: np.ndarray

    def positive_counts(self, n: int) -> sp.csr_matrix:
        return _count_matrix(self.positive, n)

    def negative_counts(self, n: int) -> sp.csr_matrix:
        return _count_matrix(self.negative, n)


def _count_matrix(pairs: np.ndarray, n: int) -> sp.csr_matrix:
    data = np.ones(len(pairs))
    return sp.csr_matrix((data, (pairs[:, 0], pairs[:, 1])), shape=(n, n))


# ---------------------------------------------------------------- transition law

def transition_weights(g: Graph, prev: int, cur: int, p: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    """Next-step law of the second-order walk at ``(prev, cur)``.

    Returns ``(neighbors(cur), probabilities)``.
    """
    if not (0 <= prev < g.n and 0 <= cur < g.n) or not g.has_edge(prev, cur):
        raise InputError(f"({prev}, {cur}) is not an edge")
    nbrs = g.neighbors_of(cur)
    prev_nbrs = g.neighbors_of(prev)
    adjacent = np.isin(nbrs, prev_nbrs, assume_unique=True)
    w = np.where(adjacent, 1.0, 1.0 / q)
    w[nbrs == prev] = 1.0 / p
    return nbrs.copy(), w / w.sum()


@nb.njit(cache=True)
def _find(nbrs, lo, hi, x):
    while lo < hi:
        mid = (lo + hi) >> 1
        v = nbrs[mid]
        if v < x:
            lo = mid + 1
        elif v > x:
            hi = mid
        else:
            return mid
    return -1


@nb.njit(cache=True)
def _weight(offsets, nbrs, prev, x, inv_p, inv_q):
    if x == prev:
        return inv_p
    if _find(nbrs, offsets[prev], offsets[prev + 1], x) >= 0:
        return 1.0
    return inv_q


@nb.njit(cache=True)
def _online_choice(offsets, nbrs, prev, cur, inv_p, inv_q, u):
    """Inverse-CDF draw over neighbors(cur); returns the position in ``nbrs``."""
    s = offsets[cur]
    e = offsets[cur + 1]
    total = 0.0
    for t in range(s, e):
        total += _weight(offsets, nbrs, prev, nbrs[t], inv_p, inv_q)
    target = u * total
    acc = 0.0
    for t in range(s, e):
        acc += _weight(offsets, nbrs, prev, nbrs[t], inv_p, inv_q)
        if target < acc:
            return t
    return e - 1


@nb.njit(cache=True)
def _build_edge_tables(offsets, nbrs, src, inv_p, inv_q):
    n_dir = nbrs.size
    toff = np.zeros(n_dir + 1, dtype=np.int64)
    for e in range(n_dir):
        cur = nbrs[e]
        toff[e + 1] = toff[e] + offsets[cur + 1] - offsets[cur]
    prob = np.empty(toff[n_dir])
    alias = np.empty(toff[n_dir], dtype=np.int64)
    for e in range(n_dir):
        prev = src[e]
        cur = nbrs[e]
        s = offsets[cur]
        d = offsets[cur + 1] - s
        w = np.empty(d)
        for t in range(d):
            w[t] = _weight(offsets, nbrs, prev, nbrs[s + t], inv_p, inv_q)
        vose_fill(w, prob[toff[e]:toff[e] + d], alias[toff[e]:toff[e] + d])
    return toff, prob, alias


@nb.njit(cache=True)
def _next_position(offsets, nbrs, prev, cur, e, method, inv_p, inv_q, toff, tprob, talias):
    """One second-order step from directed edge ``e = (prev -> cur)``."""
    s = offsets[cur]
    d = offsets[cur + 1] - s
    if method == 0:
        j = int(np.random.random() * d)
        if j >= d:
            j = d - 1
        return s + j
    if method == 1:
        u1 = np.random.random()
        u2 = np.random.random()
        return s + alias_draw(tprob, talias, toff[e], d, u1, u2)
    return _online_choice(offsets, nbrs, prev, cur, inv_p, inv_q, np.random.random())


def _walk_body(offsets, nbrs, src, starts, from_edges, k, method, inv_p, inv_q,
               toff, tprob, talias, seeds, out, lens):
    n_walks = seeds.size
    n_dir = nbrs.size
    for w in nb.prange(n_walks):
        np.random.seed(seeds[w])
        if from_edges:
            e = int(np.random.random() * n_dir)
            if e >= n_dir:
                e = n_dir - 1
            prev = src[e]
            cur = nbrs[e]
            out[w, 0] = prev
            out[w, 1] = cur
        else:
            v = starts[w]
            out[w, 0] = v
            d = offsets[v + 1] - offsets[v]
            if d == 0 or k == 0:
                lens[w] = 1
                continue
            e = offsets[v] + int(np.random.random() * d)
            if e >= offsets[v + 1]:
                e = offsets[v + 1] - 1
            prev = v
            cur = nbrs[e]
            out[w, 1] = cur
        for pos in range(2, k + 1):
            j = _next_position(offsets, nbrs, prev, cur, e, method, inv_p, inv_q, toff, tprob, talias)
            prev = cur
            cur = nbrs[j]
            e = j
            out[w, pos] = cur
        lens[w] = k + 1


_walk_serial = nb.njit(cache=True)(_walk_body)
_walk_parallel = nb.njit(cache=True, parallel=True)(_walk_body)


@nb.njit(cache=True)
def _step_batch(offsets, nbrs, prev, cur, e, method, inv_p, inv_q, toff, tprob, talias, seed, size):
    np.random.seed(seed)
    out = np.empty(size, dtype=np.int64)
    for t in range(size):
        out[t] = nbrs[_next_position(offsets, nbrs, prev, cur, e, method, inv_p, inv_q, toff, tprob, talias)]
    return out


def clamp_threads(workers: int) -> int:
    """Thread count in ``[1, NUMBA_NUM_THREADS]``; non-positive means all."""
    top = nb.config.NUMBA_NUM_THREADS
    return top if workers <= 0 else min(workers, top)


class WalkEngine:
    """Second-order walk sampler bound to one graph and (p, q).

    ``method`` is ``uniform`` (only valid for p = q = 1), ``alias`` (per
    directed-edge tables, memory sum(deg^2)) or ``online`` (weights recomputed
    per step); ``auto`` picks uniform, then alias if within budget.
    """

    def __init__(self, g: Graph, p: float = 1.0, q: float = 1.0, method: str = "auto",
                 alias_budget: int = ALIAS_BUDGET):
        if not (p > 0 and q > 0):
            raise InputError("p and q must be positive")
        self.graph = g
        self.p, self.q = float(p), float(q)
        if method == "auto":
            if p == 1.0 and q == 1.0:
                method = "uniform"
            elif int(np.sum(g.degrees.astype(np.float64) ** 2)) <= alias_budget:
                method = "alias"
            else:
                method = "online"
        if method not in _METHODS:
            raise InputError(f"unknown walk method {method!r}")
        if method == "uniform" and not (p == 1.0 and q == 1.0):
            raise InputError("uniform stepping is only exact for p = q = 1")
        self.method = method
        self._code = _METHODS[method]
        self._src = np.repeat(np.arange(g.n, dtype=np.int64), g.degrees)
        if method == "alias":
            self._toff, self._tprob, self._talias = _build_edge_tables(
                g.offsets, g.neighbors, self._src, 1.0 / self.p, 1.0 / self.q)
        else:
            self._toff = np.zeros(1, dtype=np.int64)
            self._tprob = np.zeros(0)
            self._talias = np.zeros(0, dtype=np.int64)

    def walks(self, walk_len_k: int, seeds: np.ndarray, starts: np.ndarray | None = None,
              workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Run one walk per seed; ``starts=None`` means uniform directed-edge starts.

        Returns ``(walks, lengths)`` with walks padded by ``-1``.
        """
        g = self.graph
        seeds = np.ascontiguousarray(seeds, dtype=np.uint32)
        from_edges = starts is None
        if from_edges:
            if g.m == 0:
                raise InputError("cannot start walks from edges of an empty graph")
            starts = np.zeros(seeds.size, dtype=np.int64)
        starts = np.ascontiguousarray(starts, dtype=np.int64)
        out = np.full((seeds.size, walk_len_k + 1), -1, dtype=np.int64)
        lens = np.zeros(seeds.size, dtype=np.int64)
        kernel = _walk_parallel if workers != 1 else _walk_serial
        if workers != 1:
            nb.set_num_threads(clamp_threads(workers))
        kernel(g.offsets, g.neighbors, self._src, starts, from_edges, int(walk_len_k), self._code,
               1.0 / self.p, 1.0 / self.q, self._toff, self._tprob, self._talias, seeds, out, lens)
        return out, lens

    def sample_next(self, prev: int, cur: int, size: int, seed: int = 0) -> np.ndarray:
        """Draw ``size`` iid next vertices from state ``(prev, cur)`` with the walk kernel."""
        g = self.graph
        e = int(g.offsets[prev] + np.searchsorted(g.neighbors_of(prev), cur))
        if not g.has_edge(prev, cur):
            raise InputError(f"({prev}, {cur}) is not an edge")
        return _step_batch(g.offsets, g.neighbors, prev, cur, e, self._code, 1.0 / self.p,
                           1.0 / self.q, self._toff, self._tprob, self._talias,
                           np.uint32(seed % 2 ** 32), int(size))


def walk_seeds(seed, count: int, epoch: int = 0) -> np.ndarray:
    """Per-walk 32-bit seeds; walk ``i``'s seed depends only on (seed, epoch, i)."""
    seed = 0 if seed is None else int(seed)
    return np.random.SeedSequence([seed, epoch]).generate_state(count)


def sample_walks(g: Graph, cfg: WalkConfig, seed=None, epoch: int = 0, workers: int = 1,
                 method: str = "auto", engine: WalkEngine | None = None) -> list[np.ndarray]:
    """Sample walks of ``cfg.walk_len_k + 1`` vertices.

    Theory mode draws ``walks_per_start * m`` walks from uniform directed edges;
    practical mode draws ``walks_per_start`` walks from every vertex (a walk
    from an isolated vertex is just that vertex).
    """
    arr, lens = sample_walk_array(g, cfg, seed, epoch, workers, method, engine)
    return [arr[i, :lens[i]] for i in range(arr.shape[0])]


def sample_walk_array(g: Graph, cfg: WalkConfig, seed=None, epoch: int = 0, workers: int = 1,
                      method: str = "auto", engine: WalkEngine | None = None):
    """Like :func:`sample_walks` but returns the padded ``(walks, lengths)`` arrays."""
    if g.m == 0:
        raise InputError("graph has no edges")
    engine = engine or WalkEngine(g, cfg.p, cfg.q, method)
    if cfg.start_mode == "theory":
        count = cfg.walks_per_start * g.m
        return engine.walks(cfg.walk_len_k, walk_seeds(seed, count, epoch), None, workers)
    starts = np.tile(np.arange(g.n, dtype=np.int64), cfg.walks_per_start)
    return engine.walks(cfg.walk_len_k, walk_seeds(seed, starts.size, epoch), starts, workers)


# ---------------------------------------------------------------- pairs

def _as_padded(walks) -> np.ndarray:
    if isinstance(walks, np.ndarray) and walks.ndim == 2:
        return walks
    walks = list(walks)
    if not walks:
        raise InputError("no walks given")
    width = max(len(w) for w in walks)
    out = np.full((len(walks), width), -1, dtype=np.int64)
    for i, w in enumerate(walks):
        out[i, :len(w)] = w
    return out


def extract_positive_pairs(walks, window_W: int) -> np.ndarray:
    """(center, context) rows for every in-walk position pair with ``0 < |i - j| <= W``."""
    if window_W < 1:
        raise InputError("window must be >= 1")
    arr = _as_padded(walks)
    chunks = []
    for r in range(1, min(window_W, arr.shape[1] - 1) + 1):
        a = arr[:, :-r].ravel()
        b = arr[:, r:].ravel()
        ok = (a >= 0) & (b >= 0)
        a, b = a[ok], b[ok]
        chunks.append(np.column_stack([a, b]))
        chunks.append(np.column_stack([b, a]))
    if not chunks:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(chunks)


def unigram_distribution(g: Graph, alpha: float) -> np.ndarray:
    """Negative-sampling law proportional to ``deg(v) ** alpha`` (with ``0**0 = 1``)."""
    deg = g.degrees.astype(np.float64)
    if alpha == 0:
        w = np.ones(g.n)
    else:
        w = np.zeros(g.n)
        pos = deg > 0
        w[pos] = deg[pos] ** alpha
    total = w.sum()
    if g.n == 0 or total <= 0 or g.m == 0:
        raise InputError("unigram distribution has no mass (graph without edges)")
    return w / total


def attach_negatives(positives: np.ndarray, dist: np.ndarray, negatives_l: int, seed=None,
                     exclude_center: bool = False) -> PairStream:
    """Draw ``negatives_l`` iid negatives from ``dist`` for every positive pair's center."""
    if negatives_l < 0:
        raise InputError("negatives_l must be >= 0")
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    rng = np.random.default_rng(seed)
    centers = np.repeat(positives[:, 0], negatives_l)
    if centers.size == 0:
        return PairStream(positives, np.empty((0, 2), dtype=np.int64))
    table = AliasTable(dist)
    draws = table.sample(centers.size, rng)
    if exclude_center:
        if np.count_nonzero(dist) < 2:
            raise InputError("excluding the center leaves no negative support")
        bad = draws == centers
        while bad.any():
            draws[bad] = table.sample(int(bad.sum()), rng)
            bad = draws == centers
    return PairStream(positives, np.column_stack([centers, draws]))


def sample_pairs(g: Graph, cfg: WalkConfig, seed=None) -> PairStream:
    """Walks, positive extraction and negative attachment in one call."""
    ss = np.random.SeedSequence(seed)
    walk_seed, neg_seed = ss.generate_state(2)
    walks, _ = sample_walk_array(g, cfg, int(walk_seed))
    pos = extract_positive_pairs(walks, cfg.window_W)
    dist = unigram_distribution(g, cfg.unigram_alpha)
    return attach_negatives(pos, dist, cfg.negatives_l, int(neg_seed), cfg.exclude_center)


# ---------------------------------------------------------------- exact oracle

MAX_EXACT_N = 12
MAX_EXACT_K = 6


@nb.njit(cache=True)
def _enumerate_pairs(offsets, nbrs, src, k, window, inv_p, inv_q, neg_dist, l, union):
    n = offsets.size - 1
    n_dir = nbrs.size
    pos = np.zeros((n, n))
    neg = np.zeros((n, n))
    path = np.empty(k + 1, dtype=np.int64)
    prob = np.empty(k + 1)
    cursor = np.empty(k + 1, dtype=np.int64)  # next neighbour position to try at each depth
    mark = np.zeros((n, n), dtype=np.bool_)
    centers = np.zeros(n, dtype=np.int64)
    for e in range(n_dir):
        path[0] = src[e]
        path[1] = nbrs[e]
        prob[1] = 1.0 / n_dir
        depth = 1
        cursor[1] = offsets[path[1]]
        while depth >= 1:
            if depth == k:
                pw = prob[k]
                for a in range(k + 1):
                    for b in range(max(0, a - window), min(k, a + window) + 1):
                        if a == b:
                            continue
                        i = path[a]
                        j = path[b]
                        centers[i] += 1
                        if union:
                            mark[i, j] = True
                        else:
                            pos[i, j] += pw
                if union:
                    for a in range(k + 1):
                        for b in range(max(0, a - window), min(k, a + window) + 1):
                            if a != b and mark[path[a], path[b]]:
                                pos[path[a], path[b]] += pw
                                mark[path[a], path[b]] = False
                for a in range(k + 1):
                    i = path[a]
                    c = centers[i]
                    if c > 0:
                        for j in range(n):
                            if union:
                                neg[i, j] += pw * (1.0 - (1.0 - neg_dist[j]) ** (l * c))
                            else:
                                neg[i, j] += pw * l * c * neg_dist[j]
                        centers[i] = 0
                depth -= 1
                continue
            cur = path[depth]
            prev = path[depth - 1]
            t = cursor[depth]
            if t >= offsets[cur + 1]:
                depth -= 1
                continue
            cursor[depth] = t + 1
            total = 0.0
            for s in range(offsets[cur], offsets[cur + 1]):
                total += _weight(offsets, nbrs, prev, nbrs[s], inv_p, inv_q)
            nxt = nbrs[t]
            w = _weight(offsets, nbrs, prev, nxt, inv_p, inv_q) / total
            depth += 1
            path[depth] = nxt
            prob[depth] = prob[depth - 1] * w
            cursor[depth] = offsets[nxt]
    return pos, neg


def exact_pair_probabilities(g: Graph, cfg: WalkConfig, semantics: str = "union") -> tuple[np.ndarray, np.ndarray]:
    """Exact pair laws for one walk from a uniform directed edge, by enumeration.

    ``semantics="union"`` gives P((i, j) in positives) and P((i, j) in
    negatives) for a single walk with its negatives; ``"count"`` gives the
    expected number of occurrences instead.
    """
    if g.n > MAX_EXACT_N or cfg.walk_len_k > MAX_EXACT_K:
        raise InputError(f"exact enumeration limited to n <= {MAX_EXACT_N}, k <= {MAX_EXACT_K}")
    if g.m == 0:
        raise InputError("graph has no edges")
    if semantics not in ("union", "count"):
        raise InputError(f"unknown semantics {semantics!r}")
    src = np.repeat(np.arange(g.n, dtype=np.int64), g.degrees)
    dist = unigram_distribution(g, cfg.unigram_alpha)
    return _enumerate_pairs(g.offsets, g.neighbors, src, int(cfg.walk_len_k), int(cfg.window_W),
                            1.0 / cfg.p, 1.0 / cfg.q, dist, float(cfg.negatives_l), semantics == "union")
