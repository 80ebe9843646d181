"""Closed-form limit objects for node2vec embeddings of (DC)SBM graphs."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError, UnsupportedScenarioError
from .genmodel import GenParams
from .sampler import WalkConfig


def community_degrees(params: GenParams) -> np.ndarray:
    """``P~_l = sum_j pi_j P_lj``."""
    return np.asarray(params.P, dtype=np.float64) @ np.asarray(params.pi, dtype=np.float64)


def edge_functional(params: GenParams, alpha: float) -> tuple[float, np.ndarray]:
    """Return ``(E_W(alpha), P~)`` where ``E_W(alpha) = E[W(lambda, .)^alpha]``."""
    pt = community_degrees(params)
    if alpha < 0 and np.any(pt == 0):
        raise InputError("negative exponent with a community of zero expected degree")
    e1, ea = params.theta.moments(alpha)
    with np.errstate(divide="ignore"):
        powers = np.where(pt == 0, 0.0 if alpha > 0 else 1.0, pt ** alpha)
    return float(ea * e1 ** alpha * np.dot(params.pi, powers)), pt


def _w(params: GenParams, lam, pt: np.ndarray, e1: float) -> float:
    c, theta = (lam, 1.0) if np.isscalar(lam) else lam
    return float(theta) * e1 * float(pt[int(c)])


def deepwalk_weights(params: GenParams, walk_len_k: int, negatives_l: int, alpha: float, rho: float,
                     lambda_i, lambda_j) -> tuple[float, float]:
    """Sampling intensities ``(f_P, f_N)`` for latent pair ``(lambda_i, lambda_j)``.

    A latent ``lambda`` is a community index or a ``(community, theta)`` tuple.
    """
    if not rho > 0:
        raise InputError("sparsity rho must be positive")
    ew1, pt = edge_functional(params, 1.0)
    ewa, _ = edge_functional(params, alpha)
    if ew1 == 0 or ewa == 0:
        raise InputError("edge functional vanishes")
    e1, _ = params.theta.moments(alpha)
    wi = _w(params, lambda_i, pt, e1)
    wj = _w(params, lambda_j, pt, e1)
    k, l = walk_len_k, negatives_l
    f_p = 2.0 * k / (rho * ew1)
    f_n = l * (k + 1) / (ew1 * ewa) * (wi * wj ** alpha + wi ** alpha * wj)
    return f_p, f_n


def _check_scenario(params: GenParams, walk_cfg: WalkConfig) -> None:
    if not walk_cfg.is_deepwalk:
        raise UnsupportedScenarioError("closed forms are only available for p = q = 1")
    if not params.theta.is_constant and walk_cfg.unigram_alpha != 1.0:
        raise UnsupportedScenarioError(
            "degree-corrected limits are only available for unigram exponent 1")


def _safe_log(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(x == 0):
        warnings.warn("limit matrix has unbounded (-inf) entries", RuntimeWarning, stacklevel=3)
    with np.errstate(divide="ignore"):
        return np.log(x)


def mstar_unconstrained(params: GenParams, walk_cfg: WalkConfig) -> np.ndarray:
    """Community-level minimizer of the population risk (``rho`` cancels)."""
    _check_scenario(params, walk_cfg)
    a = walk_cfg.unigram_alpha
    k = walk_cfg.walk_len_k
    ewa, pt = edge_functional(params, a)
    e1, _ = params.theta.moments(a)
    P = np.asarray(params.P, dtype=np.float64)
    pa = pt ** a
    denom = np.outer(pa, pt) + np.outer(pt, pa)
    pref = 2.0 * ewa / ((1.0 + 1.0 / k) * e1 * e1 ** a)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(P == 0, 0.0, pref * P / denom)
    return _safe_log(ratio)


def mstar_walk_limit(params: GenParams, walk_cfg: WalkConfig) -> np.ndarray:
    """Limit gram matrix matched to the windowed sampler used by :func:`trainer.train`.

    Every window offset ``r = 1..W`` contributes ``k + 1 - r`` pairs per walk and
    every positive pair draws ``l`` unigram negatives, so the pointwise minimizer
    is ``log(Tbar_lm E_W(alpha) / (l pi_m E[theta] E[theta]^alpha P~_m^alpha))``
    with ``Tbar`` the offset-weighted average of community transition powers.
    """
    _check_scenario(params, walk_cfg)
    a = walk_cfg.unigram_alpha
    k, W, l = walk_cfg.walk_len_k, walk_cfg.window_W, walk_cfg.negatives_l
    ewa, pt = edge_functional(params, a)
    e1, _ = params.theta.moments(a)
    pi = np.asarray(params.pi, dtype=np.float64)
    P = np.asarray(params.P, dtype=np.float64)
    if np.any(pt == 0):
        raise InputError("community with zero expected degree")
    T = P * pi[None, :] / pt[:, None]
    Tbar = np.zeros_like(T)
    Tr = np.eye(T.shape[0])
    wsum = 0.0
    for r in range(1, min(W, k) + 1):
        Tr = Tr @ T
        Tbar += (k + 1 - r) * Tr
        wsum += k + 1 - r
    Tbar /= wsum
    ratio = Tbar * ewa / (l * pi[None, :] * e1 * e1 ** a * (pt ** a)[None, :])
    return _safe_log(ratio)


def mstar_planted(p_tilde: float, q_tilde: float, kappa: int, walk_len_k: int) -> tuple[float, float]:
    """Diagonal and off-diagonal entries ``(alpha*, beta*)`` for the planted partition."""
    tot = p_tilde + (kappa - 1) * q_tilde
    if not tot > 0:
        raise InputError("p~ + (kappa - 1) q~ must be positive")
    c = kappa / ((1.0 + 1.0 / walk_len_k) * tot)
    a = math.log(c * p_tilde) if p_tilde > 0 else -math.inf
    if q_tilde == 0 and kappa >= 2:
        warnings.warn("q~ = 0 gives an unbounded off-diagonal limit", RuntimeWarning, stacklevel=2)
        return a, -math.inf
    return a, math.log(c * q_tilde)


def _sig(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def constrained_residual(alpha: float, p_tilde: float, q_tilde: float, kappa: int,
                         walk_len_k: int, negatives_l: int) -> float:
    """Gradient-matching residual whose positive root is the constrained optimum."""
    k, l = walk_len_k, negatives_l
    c = l * (k + 1) * (p_tilde + (kappa - 1) * q_tilde) / kappa
    return (_sig(alpha) * (k * p_tilde + c) - k * (p_tilde - q_tilde)
            - _sig(-alpha / (kappa - 1)) * (k * q_tilde + c))


def mstar_constrained_planted(p_tilde: float, q_tilde: float, kappa: int, walk_len_k: int,
                              negatives_l: int, tol: float = 1e-12) -> float:
    """Constrained (U = V) optimum ``alpha*``; the limit is ``alpha* I - alpha*/(kappa-1) (J - I)``."""
    if kappa < 2:
        raise InputError("need kappa >= 2")
    if min(p_tilde, q_tilde) < 0 or walk_len_k < 1 or negatives_l < 1:
        raise InputError("parameters must be positive")
    if p_tilde <= q_tilde:
        return 0.0
    f = lambda a: constrained_residual(a, p_tilde, q_tilde, kappa, walk_len_k, negatives_l)
    lo, hi = 0.0, 1.0
    while f(hi) <= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise NumericalError("failed to bracket the constrained root")
    if f(lo) > 0:
        raise NumericalError("residual is positive at the bracket start")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol or hi - lo <= 4 * np.finfo(float).eps * hi:
            return mid
        if fm > 0:
            hi = mid
        else:
            lo = mid
    mid = 0.5 * (lo + hi)
    if abs(f(mid)) > tol:
        raise NumericalError("bisection did not reach the residual tolerance")
    return mid


def helmert_basis(m: int) -> np.ndarray:
    """Orthonormal basis whose first column is ``1/sqrt(m)``."""
    Q = np.zeros((m, m))
    Q[:, 0] = 1.0 / math.sqrt(m)
    for j in range(1, m):
        Q[:j, j] = 1.0 / math.sqrt(j * (j + 1))
        Q[j, j] = -j / math.sqrt(j * (j + 1))
    return Q


def _min_row_distance(X: np.ndarray) -> float:
    if X.shape[0] < 2:
        return 0.0
    diff = X[:, None, :] - X[None, :, :]
    D = np.sqrt((diff ** 2).sum(-1))
    iu = np.triu_indices(X.shape[0], 1)
    return float(D[iu].min())


@dataclass(frozen=True)
class NiceFactor:
    U: np.ndarray
    V: np.ndarray
    eigenvalues: np.ndarray
    rank: int

    @property
    def delta(self) -> float:
        return _min_row_distance(self.U)


def factor_nice_matrix(alpha_s: float, beta_s: float, m: int, tol: float = 1e-12) -> NiceFactor:
    """Balanced factorization ``A = U V^T`` of ``alpha I + beta (J - I)``.

    Columns with zero eigenvalue are dropped, so ``U`` is ``m x rank``. Rows of
    ``U`` are pairwise ``sqrt(2 |alpha - beta|)`` apart whenever ``alpha != beta``.
    """
    if m < 2:
        raise InputError("need m >= 2")
    lam = np.full(m, alpha_s - beta_s, dtype=np.float64)
    lam[0] = alpha_s + (m - 1) * beta_s
    Q = helmert_basis(m)
    scale = max(abs(alpha_s), abs(beta_s), 1.0)
    keep = np.abs(lam) > tol * scale
    root = np.sqrt(np.abs(lam[keep]))
    U = Q[:, keep] * root
    V = Q[:, keep] * (np.sign(lam[keep]) * root)
    return NiceFactor(U=U, V=V, eigenvalues=lam, rank=int(keep.sum()))


def symmetric_factor(M: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """``M = U V^T`` with ``U^T U = V^T V`` from the eigendecomposition of symmetric ``M``."""
    M = np.asarray(M, dtype=np.float64)
    if not np.all(np.isfinite(M)):
        raise NumericalError("cannot factor a matrix with non-finite entries")
    lam, Q = np.linalg.eigh(0.5 * (M + M.T))
    keep = np.abs(lam) > tol * max(1.0, np.abs(lam).max())
    order = np.argsort(-np.abs(lam[keep]))
    lam, Q = lam[keep][order], Q[:, keep][:, order]
    root = np.sqrt(np.abs(lam))
    return Q * root, Q * (np.sign(lam) * root)


@dataclass(frozen=True)
class TheoryTarget:
    M_star: np.ndarray
    factor_rows: np.ndarray
    context_rows: np.ndarray
    mode: str

    @property
    def delta(self) -> float:
        return _min_row_distance(self.factor_rows)

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.M_star)) if np.all(np.isfinite(self.M_star)) else -1


def build_target(M_star: np.ndarray, d: int, mode: str = "unconstrained") -> TheoryTarget:
    """Target rows ``u~*`` zero-padded to ``d`` columns.

    Constrained targets must be positive semidefinite; their rows satisfy
    ``u~* u~*^T = M*``.
    """
    M = np.asarray(M_star, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError("M* must be square")
    if not np.allclose(M, M.T, atol=1e-12):
        raise InputError("M* must be symmetric")
    U, V = symmetric_factor(M)
    if mode == "constrained":
        lam = np.linalg.eigvalsh(M)
        if lam.min() < -1e-10 * max(1.0, abs(lam).max()):
            raise InputError("constrained target needs a positive semidefinite M*")
        V = U
    elif mode != "unconstrained":
        raise InputError(f"unknown mode {mode!r}")
    r = U.shape[1]
    if r > d:
        raise InputError(f"rank {r} of M* exceeds embedding dimension {d}")
    pad = np.zeros((M.shape[0], d - r))
    return TheoryTarget(M_star=M, factor_rows=np.hstack([U, pad]),
                        context_rows=np.hstack([V, pad]), mode=mode)


def gram_deviation(U: np.ndarray, V: np.ndarray, M_star: np.ndarray, labels: np.ndarray,
                   chunk: int = 1024) -> float:
    """``(1/n^2) sum_{i,j} (<u_i, v_j> - M*_{c(i) c(j)})^2`` computed in row blocks."""
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    M = np.asarray(M_star, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = U.shape[0]
    if V.shape != U.shape or labels.shape != (n,):
        raise InputError("U, V and labels disagree in size")
    if labels.size and (labels.min() < 0 or labels.max() >= M.shape[0]):
        raise InputError("label outside the range of M*")
    total = 0.0
    for s in range(0, n, chunk):
        G = U[s:s + chunk] @ V.T
        G -= M[labels[s:s + chunk]][:, labels]
        total += float(np.einsum("ij,ij->", G, G))
    return total / n ** 2


def procrustes_distance(U: np.ndarray, targets: np.ndarray, labels: np.ndarray,
                        return_rotation: bool = False):
    """``min_{Q in O(d)} (1/n) sum_i ||u_i - u~_{c(i)} Q||^2`` via the SVD of the cross moment."""
    U = np.asarray(U, dtype=np.float64)
    T = np.asarray(targets, dtype=np.float64)[np.asarray(labels, dtype=np.int64)]
    if T.shape != U.shape:
        raise InputError("targets and embeddings disagree in dimension")
    A, _, Bt = np.linalg.svd(T.T @ U)
    Q = A @ Bt
    val = float(((U - T @ Q) ** 2).sum() / U.shape[0])
    return (val, Q) if return_rotation else val


def consistency_rate(n: int, rho: float) -> float:
    """``sqrt(log n / (n rho))``."""
    return math.sqrt(math.log(n) / (n * rho))
