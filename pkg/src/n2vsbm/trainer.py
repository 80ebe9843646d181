"""Skip-gram with negative sampling over node2vec walks."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numba as nb
import numpy as np
import scipy.sparse as sp

from .alias import AliasTable, alias_draw
from .errors import InputError, TrainingError
from .graph import Graph
from .sampler import (PairStream, WalkConfig, WalkEngine, clamp_threads, sample_walk_array,
                      unigram_distribution)


@dataclass(frozen=True)
class TrainConfig:
    d: int = 64
    mode: str = "unconstrained"
    lr: float = 0.025
    lr_min: float = 1e-4
    epochs: int = 1
    init_scale: float | None = None
    """Half-width of the uniform init; ``None`` means ``0.5 / d`` (word2vec)."""
    seed: int = 0
    deterministic: bool = True
    workers: int = 1
    cap_inf: float | None = None
    cap_2inf: float | None = None
    shuffle: bool = True

    def __post_init__(self):
        if self.d < 1:
            raise InputError("embedding dimension must be >= 1")
        if not self.lr >= 0 or self.lr_min < 0:
            raise InputError("learning rates must be non-negative")
        if self.mode not in ("constrained", "unconstrained"):
            raise InputError(f"unknown training mode {self.mode!r}")
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")

    @property
    def tied(self) -> bool:
        return self.mode == "constrained"


@dataclass
class EmbeddingPair:
    U: np.ndarray
    V: np.ndarray
    tied: bool = False

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def d(self) -> int:
        return self.U.shape[1]

    def balance_gap(self) -> float:
        """``||U^T U - V^T V||_F``."""
        return float(np.linalg.norm(self.U.T @ self.U - self.V.T @ self.V))


def init_embeddings(n: int, cfg: TrainConfig) -> EmbeddingPair:
    """Uniform init; untied mode sets ``V = S P U`` for a random signed permutation ``S P``.

    Any n x n orthogonal map on the left keeps ``U^T U = V^T V``; a signed
    permutation does so at O(n d) cost.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xE1]))
    scale = 0.5 / cfg.d if cfg.init_scale is None else float(cfg.init_scale)
    U = rng.uniform(-scale, scale, size=(n, cfg.d)) if scale > 0 else np.zeros((n, cfg.d))
    if cfg.tied:
        return EmbeddingPair(U, U, tied=True)
    perm = rng.permutation(n)
    signs = rng.choice([-1.0, 1.0], size=n)
    V = signs[:, None] * U[perm]
    return EmbeddingPair(U, V, tied=False)


# ---------------------------------------------------------------- losses

def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def log_sigmoid(x):
    """``log(sigmoid(x))`` without overflow."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def pair_loss(u: np.ndarray, v: np.ndarray, is_positive: bool) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss of one (center, context) pair and its gradients w.r.t. ``u`` and ``v``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise InputError(f"dimension mismatch {u.shape} vs {v.shape}")
    s = float(u @ v)
    sig = sigmoid(s)
    if is_positive:
        loss = -float(log_sigmoid(s))
        coeff = sig - 1.0
    else:
        loss = -float(log_sigmoid(-s))
        coeff = sig
    return loss, coeff * v, coeff * u


def _weights(P) -> np.ndarray:
    P = P.toarray() if sp.issparse(P) else np.asarray(P, dtype=np.float64)
    P = P.astype(np.float64, copy=True)
    np.fill_diagonal(P, 0.0)
    return P


def _pair_weights(pairs, n: int | None):
    if isinstance(pairs, PairStream):
        if n is None:
            raise InputError("vertex count needed to turn a PairStream into frequencies")
        total = max(len(pairs.positive), 1)
        return _weights(pairs.positive_counts(n)) / total, _weights(pairs.negative_counts(n)) / total
    P_pos, P_neg = pairs
    return _weights(P_pos), _weights(P_neg)


def empirical_risk(pairs, U: np.ndarray, V: np.ndarray) -> float:
    """Sum over ``i != j`` of the weighted positive and negative log-losses.

    ``pairs`` is ``(P_pos, P_neg)`` (dense or sparse n x n weights) or a
    :class:`PairStream`, whose counts are divided by the positive-pair total.
    """
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if U.shape != V.shape:
        raise InputError("U and V must have the same shape")
    Wp, Wn = _pair_weights(pairs, U.shape[0])
    if Wp.shape != (U.shape[0],) * 2:
        raise InputError("pair weights do not match the embedding size")
    M = U @ V.T
    return float(-(Wp * log_sigmoid(M)).sum() - (Wn * log_sigmoid(-M)).sum())


def empirical_risk_grad(pairs, U: np.ndarray, V: np.ndarray, tied: bool = False):
    """Risk with gradients ``(risk, dU, dV)``; with ``tied`` the single-matrix gradient is ``dU``."""
    U = np.asarray(U, dtype=np.float64)
    V = U if tied else np.asarray(V, dtype=np.float64)
    Wp, Wn = _pair_weights(pairs, U.shape[0])
    M = U @ V.T
    risk = float(-(Wp * log_sigmoid(M)).sum() - (Wn * log_sigmoid(-M)).sum())
    S = sigmoid(M)
    G = -Wp * (1.0 - S) + Wn * S
    dU = G @ V
    dV = G.T @ U
    if tied:
        return risk, dU + dV, dU + dV
    return risk, dU, dV


# ---------------------------------------------------------------- SGD kernel

@nb.njit(cache=True, inline="always")
def _sig(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@nb.njit(cache=True)
def _project(row, cap_inf, cap_2inf):
    d = row.size
    if cap_inf > 0:
        for t in range(d):
            if row[t] > cap_inf:
                row[t] = cap_inf
            elif row[t] < -cap_inf:
                row[t] = -cap_inf
    if cap_2inf > 0:
        s = 0.0
        for t in range(d):
            s += row[t] * row[t]
        if s > cap_2inf * cap_2inf:
            f = cap_2inf / np.sqrt(s)
            for t in range(d):
                row[t] *= f


def _sgd_body(walks, lens, order, before, U, V, window, n_neg, nprob, nalias, lr0, lr_min,
              done0, total, seeds, exclude_center, cap_inf, cap_2inf, status):
    d = U.shape[1]
    n_nodes = nprob.size
    use_caps = cap_inf > 0 or cap_2inf > 0
    for oi in nb.prange(order.size):
        w = order[oi]
        np.random.seed(seeds[oi])
        gu = np.empty(d)
        L = lens[w]
        done = done0 + before[oi]
        for a in range(L):
            c = walks[w, a]
            lo = a - window
            if lo < 0:
                lo = 0
            hi = a + window
            if hi > L - 1:
                hi = L - 1
            for b in range(lo, hi + 1):
                if b == a:
                    continue
                done += 1
                x = walks[w, b]
                if x == c:
                    continue
                lr = lr0 - (lr0 - lr_min) * (done / total)
                if lr < lr_min:
                    lr = lr_min
                for t in range(d):
                    gu[t] = 0.0
                s = 0.0
                for t in range(d):
                    s += U[c, t] * V[x, t]
                if not np.isfinite(s):
                    status[0] = done
                    return
                g = _sig(s) - 1.0
                for t in range(d):
                    gu[t] += g * V[x, t]
                    V[x, t] -= lr * g * U[c, t]
                if use_caps:
                    _project(V[x], cap_inf, cap_2inf)
                for _ in range(n_neg):
                    r = alias_draw(nprob, nalias, 0, n_nodes, np.random.random(), np.random.random())
                    if exclude_center:
                        while r == c:
                            r = alias_draw(nprob, nalias, 0, n_nodes, np.random.random(), np.random.random())
                    if r == c:
                        continue
                    s = 0.0
                    for t in range(d):
                        s += U[c, t] * V[r, t]
                    if not np.isfinite(s):
                        status[0] = done
                        return
                    g = _sig(s)
                    for t in range(d):
                        gu[t] += g * V[r, t]
                        V[r, t] -= lr * g * U[c, t]
                    if use_caps:
                        _project(V[r], cap_inf, cap_2inf)
                for t in range(d):
                    U[c, t] -= lr * gu[t]
                if use_caps:
                    _project(U[c], cap_inf, cap_2inf)


_sgd_serial = nb.njit(cache=True)(_sgd_body)
_sgd_parallel = nb.njit(cache=True, parallel=True)(_sgd_body)


def _pairs_per_walk(lens: np.ndarray, window: int) -> np.ndarray:
    L = lens.astype(np.int64)
    out = np.zeros_like(L)
    for r in range(1, window + 1):
        out += 2 * np.maximum(L - r, 0)
    return out


def train(g: Graph, walk_cfg: WalkConfig, cfg: TrainConfig, init: EmbeddingPair | None = None,
          walk_method: str = "auto") -> EmbeddingPair:
    """Fit embeddings by SGD, regenerating walks every epoch.

    The learning rate decays linearly from ``cfg.lr`` to ``cfg.lr_min`` over
    all positive pairs of all epochs. In deterministic mode the pair order is
    fixed by the seed and the result is bit-reproducible; otherwise walks are
    processed by ``cfg.workers`` threads with unsynchronized updates.
    """
    if g.m == 0:
        raise InputError("cannot train on a graph without edges")
    emb = init if init is not None else init_embeddings(g.n, cfg)
    U = emb.U
    V = U if cfg.tied else emb.V
    dist = unigram_distribution(g, walk_cfg.unigram_alpha)
    table = AliasTable(dist)
    engine = WalkEngine(g, walk_cfg.p, walk_cfg.q, walk_method)
    parallel = not cfg.deterministic and cfg.workers != 1
    workers = 1 if not parallel else cfg.workers
    kernel = _sgd_parallel if parallel else _sgd_serial
    if parallel:
        nb.set_num_threads(clamp_threads(workers))
    lr_min = min(cfg.lr_min, cfg.lr)
    cap_inf = float(cfg.cap_inf or 0.0)
    cap_2inf = float(cfg.cap_2inf or 0.0)
    total = None
    done = 0
    status = np.zeros(1, dtype=np.int64)
    for epoch in range(cfg.epochs):
        walks, lens = sample_walk_array(g, walk_cfg, cfg.seed, epoch, workers, engine=engine)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch, 0x5E]))
        order = rng.permutation(walks.shape[0]) if cfg.shuffle else np.arange(walks.shape[0])
        counts = _pairs_per_walk(lens[order], walk_cfg.window_W)
        before = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        if total is None:
            total = max(int(counts.sum()) * cfg.epochs, 1)
        seeds = np.random.SeedSequence([cfg.seed, epoch, 0x9E]).generate_state(order.size)
        kernel(walks, lens, order, before, U, V, int(walk_cfg.window_W), int(walk_cfg.negatives_l),
               table.prob, table.alias, float(cfg.lr), float(lr_min), float(done), float(total),
               seeds, bool(walk_cfg.exclude_center), cap_inf, cap_2inf, status)
        if status[0]:
            raise TrainingError(f"non-finite score at epoch {epoch}, pair step {int(status[0])}",
                                step=int(status[0]))
        done += int(counts.sum())
    if not (np.isfinite(U).all() and np.isfinite(V).all()):
        raise TrainingError("non-finite embedding entries after training")
    return EmbeddingPair(U, V, tied=cfg.tied)


# ---------------------------------------------------------------- persistence

def save_embeddings(path: str | Path, X: np.ndarray, binary: bool = False,
                    ids: np.ndarray | None = None) -> None:
    """Write ``n d`` then one row per vertex (text), or the same header then float64 LE (binary)."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if binary:
        with open(path, "wb") as fh:
            fh.write(f"{n} {d}\n".encode())
            fh.write(X.astype("<f8").tobytes())
        return
    ids = np.arange(n) if ids is None else np.asarray(ids)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n} {d}\n")
        for i in range(n):
            fh.write(f"{ids[i]} " + " ".join(repr(float(x)) for x in X[i]) + "\n")


def load_embeddings(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode().split()
        try:
            n, d = int(header[0]), int(header[1])
        except (IndexError, ValueError):
            raise InputError(f"{path}: bad embedding header") from None
        rest = fh.read()
    try:
        text = rest.decode("utf-8")
        rows = [line.split() for line in text.splitlines() if line.strip()]
        if len(rows) == n and all(len(r) == d + 1 for r in rows):
            X = np.empty((n, d))
            for k, r in enumerate(rows):
                X[int(r[0]) if int(r[0]) < n else k] = [float(x) for x in r[1:]]
            return X
    except (UnicodeDecodeError, ValueError):
        pass
    if len(rest) != n * d * 8:
        raise InputError(f"{path}: expected {n}x{d} embedding rows")
    return np.frombuffer(rest, dtype="<f8").reshape(n, d).copy()
