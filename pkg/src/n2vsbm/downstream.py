"""Node classification and link prediction on top of learned embeddings."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax
from scipy.stats import rankdata

from .errors import InputError
from .graph import Graph, build_graph
from .sampler import WalkConfig
from .trainer import TrainConfig, train

EDGE_MODES = ("average", "hadamard")


@dataclass
class LogisticModel:
    """Multinomial logistic regression; ``W`` has a trailing bias row."""

    W: np.ndarray
    classes: np.ndarray
    n_iter: int = 0
    grad_norm: float = np.inf

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return X @ self.W[:-1] + self.W[-1]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.decision(X), axis=1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.classes[self.decision(X).argmax(1)]


def logistic_loss_grad(W: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float = 1e-4):
    """Mean cross-entropy plus ``lam/2 ||W_features||^2``, and its gradient.

    ``y`` holds class indices in ``[0, K)``; the bias row is not penalized.
    """
    n = X.shape[0]
    Z = X @ W[:-1] + W[-1]
    logp = log_softmax(Z, axis=1)
    loss = -logp[np.arange(n), y].mean() + 0.5 * lam * (W[:-1] ** 2).sum()
    G = np.exp(logp)
    G[np.arange(n), y] -= 1.0
    G /= n
    grad = np.vstack([X.T @ G + lam * W[:-1], G.sum(0, keepdims=True)])
    return float(loss), grad


def fit_logistic(X: np.ndarray, y, lam: float = 1e-4, tol: float = 1e-6,
                 max_iter: int = 5000) -> LogisticModel:
    """Full-batch gradient descent with step ``1/L`` for the Boehning curvature bound ``L``."""
    X = np.asarray(X, dtype=np.float64)
    classes, yi = np.unique(np.asarray(y), return_inverse=True)
    K = max(classes.size, 2)
    if classes.size == 1:
        classes = np.array([classes[0], classes[0]])
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    L = 0.5 * np.linalg.norm(Xb, 2) ** 2 / X.shape[0] + lam
    step = 1.0 / L
    W = np.zeros((X.shape[1] + 1, K))
    gn = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        _, g = logistic_loss_grad(W, X, yi, lam)
        gn = float(np.linalg.norm(g))
        if gn < tol:
            break
        W -= step * g
    return LogisticModel(W, classes, it, gn)


def _split(labels: np.ndarray, train_frac: float, rng: np.random.Generator, attempts: int = 100):
    n = labels.size
    n_train = min(max(int(round(train_frac * n)), 1), n - 1)
    classes = np.unique(labels)
    for _ in range(attempts):
        perm = rng.permutation(n)
        tr, te = perm[:n_train], perm[n_train:]
        if np.unique(labels[tr]).size == classes.size:
            return tr, te
    raise InputError(f"a class is missing from the training split after {attempts} attempts")


def train_node_classifier(embeddings: np.ndarray, labels, train_frac: float = 0.1, seed=None,
                          lam: float = 1e-4) -> tuple[float, LogisticModel]:
    """Fit on a random ``train_frac`` of the vertices and return held-out accuracy."""
    if not 0 < train_frac < 1:
        raise InputError("train_frac must lie in (0, 1)")
    X = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if X.shape[0] != y.size:
        raise InputError("embeddings and labels disagree in length")
    tr, te = _split(y, train_frac, np.random.default_rng(seed))
    model = fit_logistic(X[tr], y[tr], lam)
    return float(np.mean(model.predict(X[te]) == y[te])), model


def edge_embedding(u: np.ndarray, v: np.ndarray, mode: str = "average") -> np.ndarray:
    """Average ``(u + v)/2`` or Hadamard ``u * v``; works row-wise on matrices."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise InputError("edge endpoints must have equal dimension")
    if mode == "average":
        return 0.5 * (u + v)
    if mode == "hadamard":
        return u * v
    raise InputError(f"unknown edge embedding mode {mode!r}")


def roc_auc(y_true: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    y = np.asarray(y_true).astype(bool)
    pos, neg = y.sum(), (~y).sum()
    if pos == 0 or neg == 0:
        raise InputError("AUC needs both classes")
    r = rankdata(scores)
    return float((r[y].sum() - pos * (pos + 1) / 2) / (pos * neg))


def _sample_non_edges(g: Graph, count: int, rng: np.random.Generator) -> np.ndarray:
    n = g.n
    available = n * (n - 1) // 2 - g.m
    if available < count:
        raise InputError(f"only {available} non-edges available, {count} requested")
    seen: set[tuple[int, int]] = set()
    out = []
    while len(out) < count:
        batch = rng.integers(0, n, size=(2 * (count - len(out)) + 16, 2))
        for a, b in batch:
            a, b = int(a), int(b)
            if a == b:
                continue
            a, b = min(a, b), max(a, b)
            if (a, b) in seen or g.has_edge(a, b):
                continue
            seen.add((a, b))
            out.append((a, b))
            if len(out) == count:
                break
    return np.asarray(out, dtype=np.int64)


def link_prediction_experiment(g, walk_cfg: WalkConfig, train_cfg: TrainConfig, edge_frac: float = 0.5,
                               mode: str = "average", seed=None, n_pairs: int | None = None,
                               test_frac: float = 0.2) -> dict[str, float]:
    """Hide ``edge_frac`` of the edges, embed the rest, and classify held-out edges vs non-edges."""
    g = getattr(g, "graph", g)
    if mode not in EDGE_MODES:
        raise InputError(f"unknown edge embedding mode {mode!r}")
    if not 0 < edge_frac < 1:
        raise InputError("edge_frac must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    edges = g.edges()
    n_hold = int(round(edge_frac * edges.shape[0]))
    perm = rng.permutation(edges.shape[0])
    held, kept = edges[perm[:n_hold]], edges[perm[n_hold:]]
    residual = build_graph(kept, g.n)
    if residual.m == 0 or held.shape[0] == 0:
        raise InputError("edge split leaves an empty side")
    emb = train(residual, walk_cfg, train_cfg)
    E = min(1000, held.shape[0]) if n_pairs is None else min(int(n_pairs), held.shape[0])
    J = held[rng.choice(held.shape[0], E, replace=False)]
    Jt = _sample_non_edges(g, E, rng)
    pairs = np.vstack([J, Jt])
    y = np.r_[np.ones(E, dtype=np.int64), np.zeros(E, dtype=np.int64)]
    X = edge_embedding(emb.U[pairs[:, 0]], emb.U[pairs[:, 1]], mode)
    order = rng.permutation(2 * E)
    n_test = max(int(round(test_frac * 2 * E)), 2)
    te, tr = order[:n_test], order[n_test:]
    if np.unique(y[te]).size < 2 or np.unique(y[tr]).size < 2:
        raise InputError("too few pairs for a two-class split")
    model = fit_logistic(X[tr], y[tr])
    score = model.predict_proba(X[te])[:, list(model.classes).index(1)]
    return {"auc": roc_auc(y[te], score),
            "accuracy": float(np.mean(model.predict(X[te]) == y[te])),
            "n_pairs": int(E)}
