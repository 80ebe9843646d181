"""Samplers for the SBM, planted-partition SBM and degree-corrected SBM."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import InputError
from .graph import Graph, build_graph

HALFNORMAL_SHIFT = 1.0 - 1.0 / math.sqrt(2.0 * math.pi)

# above this edge probability the pair loop is dense instead of geometric skipping
_DENSE_THRESHOLD = 0.5


@dataclass(frozen=True)
class ThetaSpec:
    """Degree-correction recipe: ``constant`` (theta = 1), ``halfnormal`` or ``array``."""

    kind: str = "constant"
    sigma: float = 0.25
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "halfnormal", "array"):
            raise InputError(f"unknown theta recipe {self.kind!r}")
        if self.kind == "halfnormal" and not self.sigma > 0:
            raise InputError("half-normal theta recipe needs sigma > 0")
        if self.kind == "array":
            if self.values is None:
                raise InputError("array theta recipe needs values")
            vals = np.asarray(self.values, dtype=np.float64)
            if (vals < 0).any() or not np.isfinite(vals).all():
                raise InputError("theta values must be finite and non-negative")
            object.__setattr__(self, "values", vals)

    @property
    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "array":
            return bool(np.all(self.values == self.values[0]))
        return False

    def moments(self, alpha: float) -> tuple[float, float]:
        """Return ``(E[theta], E[theta**alpha])``.

        Half-normal moments come from adaptive quadrature of the density of
        ``|Z| + 1 - (2 pi)^(-1/2)``; array moments are plain sample averages.
        """
        if self.kind == "constant":
            return 1.0, 1.0
        if self.kind == "array":
            v = self.values
            return float(v.mean()), float(np.mean(v ** alpha))
        s = self.sigma

        def density(z):
            return math.sqrt(2.0 / math.pi) / s * math.exp(-0.5 * (z / s) ** 2)

        def moment(a):
            val, _ = integrate.quad(lambda z: (z + HALFNORMAL_SHIFT) ** a * density(z),
                                    0.0, math.inf, epsabs=1e-13, epsrel=1e-11)
            return val

        return moment(1.0), moment(alpha)


@dataclass(frozen=True)
class GenParams:
    kappa: int
    pi: np.ndarray
    P: np.ndarray
    rho: float = 1.0
    theta: ThetaSpec = field(default_factory=ThetaSpec)

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64).ravel()
        P = np.atleast_2d(np.asarray(self.P, dtype=np.float64))
        if self.kappa < 1:
            raise InputError("need at least one community")
        if pi.shape != (self.kappa,) or P.shape != (self.kappa, self.kappa):
            raise InputError(f"pi/P shapes {pi.shape}/{P.shape} do not match kappa={self.kappa}")
        if (pi < 0).any() or abs(pi.sum() - 1.0) > 1e-12:
            raise InputError("pi must be a probability vector")
        if not np.allclose(P, P.T, rtol=0, atol=0) or (P < 0).any() or (P > 1).any():
            raise InputError("P must be symmetric with entries in [0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise InputError(f"sparsity factor must lie in [0, 1], got {self.rho}")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "P", P)


@dataclass(frozen=True, eq=False)
class LabeledGraph:
    graph: Graph
    labels: np.ndarray
    thetas: np.ndarray
    clipped: int = 0
    """Number of vertex pairs whose link probability was clipped to 1."""


def rho_from_rule(rule: str | float, n: int) -> float:
    """Sparsity factor from ``dense``, ``logn_over_n`` or an explicit number."""
    if isinstance(rule, str):
        if rule == "dense":
            return 1.0
        if rule == "logn_over_n":
            return min(1.0, math.log(n) / n) if n > 1 else 1.0
        try:
            return float(rule)
        except ValueError:
            raise InputError(f"unknown sparsity rule {rule!r}") from None
    return float(rule)


def planted_partition(n: int, kappa: int, p_tilde: float, q_tilde: float,
                      rho: float | str = 1.0, theta: ThetaSpec | None = None) -> GenParams:
    """Planted-partition parameters: ``p_tilde`` on the diagonal of P, ``q_tilde`` elsewhere."""
    if kappa < 1:
        raise InputError("planted partition needs kappa >= 1")
    for name, v in (("p_tilde", p_tilde), ("q_tilde", q_tilde)):
        if not 0.0 <= v <= 1.0:
            raise InputError(f"{name} must be in [0, 1], got {v}")
    P = np.full((kappa, kappa), float(q_tilde))
    np.fill_diagonal(P, float(p_tilde))
    pi = np.full(kappa, 1.0 / kappa)
    return GenParams(kappa, pi, P, rho_from_rule(rho, n), theta or ThetaSpec())


def sample_theta_halfnormal(n: int, sigma: float, seed=None) -> np.ndarray:
    """Draw ``|Z| + 1 - (2 pi)^(-1/2)`` with ``Z ~ N(0, sigma^2)``."""
    if not sigma > 0:
        raise InputError("sigma must be positive")
    rng = np.random.default_rng(seed)
    return np.abs(rng.normal(0.0, sigma, size=n)) + HALFNORMAL_SHIFT


def _geometric_positions(rng: np.random.Generator, total: int, p: float) -> np.ndarray:
    """Indices in ``[0, total)`` of successes of iid Bernoulli(p) trials, by skipping."""
    if total <= 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(total, dtype=np.int64)
    mean = total * p
    chunks = []
    last = -1
    while True:
        size = int(mean + 6.0 * math.sqrt(mean) + 16)
        pos = last + np.cumsum(rng.geometric(p, size=size))
        chunks.append(pos)
        last = int(pos[-1])
        if last >= total:
            break
    pos = np.concatenate(chunks)
    return pos[pos < total]


def _triangle_index(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map linear index t over pairs (i, j), j < i, row-major, to (i, j)."""
    i = np.floor((1.0 + np.sqrt(1.0 + 8.0 * t.astype(np.float64))) / 2.0).astype(np.int64)
    # fix float rounding at row boundaries
    i -= (i * (i - 1) // 2) > t
    i += ((i + 1) * i // 2) <= t
    j = t - i * (i - 1) // 2
    return i, j


def _sample_block(rng, members_a, members_b, same, base, thetas, theta_const):
    """Edges between two label blocks; returns (edges, clipped_count)."""
    sa, sb = members_a.size, members_b.size
    total = sa * (sa - 1) // 2 if same else sa * sb
    if total == 0 or base <= 0.0:
        return np.empty((0, 2), dtype=np.int64), 0
    ta, tb = thetas[members_a], thetas[members_b]
    pmax = base * (1.0 if theta_const else float(ta.max() * tb.max()))
    if theta_const:
        pmax *= float(ta[0] * tb[0])
    if pmax < _DENSE_THRESHOLD:
        pos = _geometric_positions(rng, total, pmax)
        if same:
            i, j = _triangle_index(pos)
        else:
            i, j = np.divmod(pos, sb)
        if not theta_const:
            # thinning: accept each candidate with its own probability
            keep = rng.random(pos.size) * pmax < base * ta[i] * tb[j]
            i, j = i[keep], j[keep]
        return np.column_stack([members_a[i], members_b[j]]), 0
    out = []
    clipped = 0
    chunk = max(1, 2 ** 22 // max(sb, 1))
    for start in range(0, sa, chunk):
        rows = np.arange(start, min(sa, start + chunk))
        prob = base * np.outer(ta[rows], tb)
        clipped_mask = prob > 1.0
        if same:
            valid = np.arange(sb)[None, :] < rows[:, None]
            clipped_mask &= valid
        clipped += int(clipped_mask.sum())
        hit = rng.random(prob.shape) < np.minimum(prob, 1.0)
        if same:
            hit &= valid
        ri, cj = np.nonzero(hit)
        out.append(np.column_stack([members_a[rows[ri]], members_b[cj]]))
    return np.concatenate(out), clipped


def sample_graph(params: GenParams, n: int, seed=None, exact_balance: bool = False) -> LabeledGraph:
    """Draw a (DC)SBM graph with ground-truth labels and degree factors.

    Labels are iid Categorical(pi) unless ``exact_balance`` is set, in which
    case community sizes are ``round(n * pi)`` (remainder to the first
    communities) and the assignment is a uniform random permutation.
    Each block pair gets its own RNG stream spawned from ``seed``.
    """
    if n < 0:
        raise InputError("n must be non-negative")
    kappa = params.kappa
    root = np.random.SeedSequence(seed)
    label_seq, theta_seq, edge_seq = root.spawn(3)
    rng = np.random.default_rng(label_seq)
    if exact_balance:
        sizes = np.floor(n * params.pi).astype(np.int64)
        sizes[: n - sizes.sum()] += 1
        labels = rng.permutation(np.repeat(np.arange(kappa), sizes))
    else:
        labels = rng.choice(kappa, size=n, p=params.pi)
    spec = params.theta
    if spec.kind == "constant":
        thetas = np.ones(n)
    elif spec.kind == "halfnormal":
        thetas = sample_theta_halfnormal(n, spec.sigma, theta_seq)
    else:
        if spec.values.size != n:
            raise InputError(f"theta array has length {spec.values.size}, expected {n}")
        thetas = spec.values.copy()
    theta_const = spec.is_constant

    members = [np.flatnonzero(labels == a) for a in range(kappa)]
    block_seqs = edge_seq.spawn(kappa * (kappa + 1) // 2)
    edges = []
    clipped = 0
    idx = 0
    for a in range(kappa):
        for b in range(a, kappa):
            block_rng = np.random.default_rng(block_seqs[idx])
            idx += 1
            e, c = _sample_block(block_rng, members[a], members[b], a == b,
                                 params.rho * params.P[a, b], thetas, theta_const)
            edges.append(e)
            clipped += c
    if clipped:
        warnings.warn(f"{clipped} vertex pairs had link probability > 1 and were clipped",
                      RuntimeWarning, stacklevel=2)
    g = build_graph(np.concatenate(edges) if edges else np.empty((0, 2), np.int64), n)
    return LabeledGraph(g, labels.astype(np.int64), thetas, clipped)
