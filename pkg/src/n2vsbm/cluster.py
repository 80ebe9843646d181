"""k-means with k-means++ seeding and a normalized-Laplacian spectral baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .errors import InputError, NumericalError
from .graph import Graph, largest_component

DENSE_EIG_MAX = 3000


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    cost: float
    n_iter: int = 0


def _sq_dist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    D = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(D, 0.0)


def kmeans_cost(X: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    """``(1/n) ||X - Theta centers||_F^2``."""
    X = np.asarray(X, dtype=np.float64)
    return float(((X - centers[labels]) ** 2).sum() / X.shape[0])


def _plusplus(X, k, rng):
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d2 = ((X - X[idx[0]]) ** 2).sum(1)
    for _ in range(1, k):
        tot = d2.sum()
        j = int(rng.integers(n)) if tot <= 0 else int(rng.choice(n, p=d2 / tot))
        idx.append(j)
        d2 = np.minimum(d2, ((X - X[j]) ** 2).sum(1))
    return X[idx].copy()


def _lloyd(X, centers, max_iter, tol, check_monotone):
    k = centers.shape[0]
    prev_cost = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        D = _sq_dist(X, centers)
        labels = D.argmin(1)
        cost = float(D[np.arange(X.shape[0]), labels].mean())
        if check_monotone and cost > prev_cost * (1 + 1e-12) + 1e-15:
            raise NumericalError(f"k-means cost increased at iteration {it}")
        prev_cost = cost
        counts = np.bincount(labels, minlength=k)
        new = np.zeros_like(centers)
        np.add.at(new, labels, X)
        empty = counts == 0
        new[~empty] /= counts[~empty, None]
        if empty.any():
            far = D[np.arange(X.shape[0]), labels]
            for j in np.flatnonzero(empty):
                i = int(far.argmax())
                new[j] = X[i]
                far[i] = -1.0
        shift = float(np.sqrt(((new - centers) ** 2).sum(1)).max())
        centers = new
        if shift < tol:
            break
    D = _sq_dist(X, centers)
    labels = D.argmin(1)
    return labels, centers, kmeans_cost(X, labels, centers), it


def kmeans(points: np.ndarray, k: int, restarts: int = 10, seed=None, max_iter: int = 300,
           tol: float = 1e-8, check_monotone: bool = False) -> KMeansResult:
    """Best of ``restarts`` k-means++ seeded Lloyd runs.

    Restart ``r`` uses its own spawned stream, and the lowest cost wins with ties
    broken by restart index.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if k < 1 or k > n:
        raise InputError(f"need 1 <= k <= n, got k={k}, n={n}")
    if restarts < 1:
        raise InputError("restarts must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    for ss in streams:
        rng = np.random.default_rng(ss)
        labels, centers, cost, it = _lloyd(X, _plusplus(X, k, rng), max_iter, tol, check_monotone)
        if best is None or cost < best.cost:
            best = KMeansResult(labels.astype(np.int64), centers, cost, it)
    return best


def spectral_embedding(g: Graph, kappa: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors of the ``kappa`` smallest eigenvalues of ``I - D^-1/2 A D^-1/2``."""
    if kappa < 1 or kappa > g.n:
        raise InputError(f"need 1 <= kappa <= n, got {kappa}")
    deg = g.degrees.astype(np.float64)
    inv = np.zeros_like(deg)
    inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    A = g.adjacency().astype(np.float64)
    N = sp.diags(inv) @ A @ sp.diags(inv)
    if g.n <= DENSE_EIG_MAX or kappa >= g.n - 1:
        L = np.diag((deg > 0).astype(np.float64)) - N.toarray()
        vals, vecs = np.linalg.eigh(L)
        return vals[:kappa], vecs[:, :kappa]
    mu, vecs = eigsh(N.tocsc(), k=kappa, which="LA", tol=1e-10,
                     v0=np.full(g.n, 1.0 / np.sqrt(g.n)))
    order = np.argsort(-mu)
    return 1.0 - mu[order], vecs[:, order]


def _row_normalize(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1)
    out = np.zeros_like(X)
    nz = norms > 0
    out[nz] = X[nz] / norms[nz, None]
    return out


def spectral_clustering(g: Graph, kappa: int, seed=None, enforce_connectivity: bool = True,
                        restarts: int = 10) -> np.ndarray:
    """Labels from k-means on row-normalized Laplacian eigenvectors.

    With ``enforce_connectivity`` the eigenvectors come from the largest
    component; remaining vertices get zero rows and join the nearest center.
    """
    if kappa < 1 or kappa > g.n:
        raise InputError(f"need 1 <= kappa <= n, got {kappa}")
    if enforce_connectivity:
        sub, index = largest_component(g)
        if sub.n < g.n:
            if kappa > sub.n:
                raise InputError("largest component has fewer than kappa vertices")
            _, vecs = spectral_embedding(sub, kappa)
            Y = _row_normalize(vecs)
            res = kmeans(Y, kappa, restarts, seed)
            labels = np.empty(g.n, dtype=np.int64)
            labels[index] = res.labels
            rest = np.setdiff1d(np.arange(g.n), index)
            labels[rest] = _sq_dist(np.zeros((rest.size, kappa)), res.centers).argmin(1)
            return labels
    _, vecs = spectral_embedding(g, kappa)
    return kmeans(_row_normalize(vecs), kappa, restarts, seed).labels
