"""End-to-end acceptance checks.

Each test appends one ``CRITERION n: PASS/FAIL ...`` line to ``LINES``; the
conftest summary hook prints them after the run. Run directly with
``python3 tests/test_acceptance.py`` or via ``pytest tests/test_acceptance.py``.
"""
import itertools
import math
import os
import re
import sys
import time
import warnings
from pathlib import Path

import networkx as nx
import numpy as np
import pytest

from n2vsbm.cluster import kmeans
from n2vsbm.downstream import logistic_loss_grad, train_node_classifier
from n2vsbm.experiment import ExperimentSpec, run_experiment
from n2vsbm.genmodel import planted_partition, sample_graph
from n2vsbm.graph import build_graph, largest_component, load_edge_list, read_labels
from n2vsbm.metrics import (accuracy, ari, misclassification, nmi,
                            worst_case_misclassification)
from n2vsbm.sampler import (WalkConfig, WalkEngine, exact_pair_probabilities, sample_walk_array,
                            transition_weights)
from n2vsbm.theory import (constrained_residual, gram_deviation, mstar_constrained_planted,
                           mstar_planted, mstar_unconstrained, mstar_walk_limit)
from n2vsbm.trainer import TrainConfig, pair_loss, train

LINES: list[str] = []

KAPPAS = range(2, 6)
PQ = (0.1, 0.3, 0.5, 0.8)
KS = (1, 5, 10)


class _Clock:
    def __init__(self, budget: float):
        self.budget = budget
        self.t0 = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    @property
    def in_budget(self) -> bool:
        return self.elapsed < self.budget


def _report(num: int, ok: bool, detail: str, clock: _Clock) -> None:
    ok = ok and clock.in_budget
    LINES.append(f"CRITERION {num}: {'PASS' if ok else 'FAIL'} {detail} "
                 f"({clock.elapsed:.1f}s / {clock.budget:.0f}s)")
    assert ok, LINES[-1]


def _tv(a, b) -> float:
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def test_criterion_1_theory_closed_form():
    clock = _Clock(1.0)
    worst = 0.0
    for kappa, p, q, k in itertools.product(KAPPAS, PQ, PQ, KS):
        cfg = WalkConfig(walk_len_k=k)
        M = mstar_unconstrained(planted_partition(100, kappa, p, q), cfg)
        # closed form written out independently of the library
        c = kappa / ((1 + 1 / k) * (p + (kappa - 1) * q))
        ref = np.full((kappa, kappa), math.log(c * q))
        np.fill_diagonal(ref, math.log(c * p))
        a, b = mstar_planted(p, q, kappa, k)
        worst = max(worst, float(np.abs(M - ref).max()), abs(a - ref[0, 0]), abs(b - ref[0, 1]))
    _report(1, worst <= 1e-12, f"max |M - closed form| = {worst:.2e} (tol 1e-12)", clock)


def _residual_oracle(a, p, q, kappa, k, l):
    sig = lambda x: 1 / (1 + math.exp(-x))
    c = l * (k + 1) * (p + (kappa - 1) * q) / kappa
    return sig(a) * (k * p + c) - k * (p - q) - sig(-a / (kappa - 1)) * (k * q + c)


def test_criterion_2_constrained_dichotomy():
    clock = _Clock(1.0)
    bad = []
    worst = 0.0
    for kappa, p, q, k in itertools.product(KAPPAS, PQ, PQ, KS):
        a = mstar_constrained_planted(p, q, kappa, k, 5)
        if p <= q:
            if a != 0.0:
                bad.append((kappa, p, q, k))
            continue
        r = max(abs(_residual_oracle(a, p, q, kappa, k, 5)), abs(constrained_residual(a, p, q, kappa, k, 5)))
        worst = max(worst, r)
        if not (a > 0 and r <= 1e-12):
            bad.append((kappa, p, q, k))
    _report(2, not bad, f"{len(bad)} bad cells, max residual {worst:.2e} (tol 1e-12)", clock)


def _atlas_graphs(max_n: int):
    for h in nx.graph_atlas_g():
        if 2 <= h.number_of_nodes() <= max_n and nx.is_connected(h):
            yield build_graph(list(h.edges()), h.number_of_nodes())


def _step_tv(g, p, q, draws=100_000) -> float:
    eng = WalkEngine(g, p, q)
    worst = 0.0
    for s, (u, v) in enumerate(g.edges()):
        for a, b in ((u, v), (v, u)):
            nb, pr = transition_weights(g, a, b, p, q)
            x = eng.sample_next(a, b, draws, seed=s * 2 + (a < b))
            freq = np.bincount(np.searchsorted(nb, x), minlength=nb.size) / draws
            worst = max(worst, _tv(freq, pr))
    return worst


def _union_pair_tv(g, p, q, k, walks=50_000) -> float:
    cfg = WalkConfig(p=p, q=q, walk_len_k=k, window_W=1, start_mode="theory",
                     walks_per_start=-(-walks // g.m))
    arr, _ = sample_walk_array(g, cfg, seed=k * 1000 + g.m)
    n = g.n
    a, b = arr[:, :-1], arr[:, 1:]
    wid = np.repeat(np.arange(arr.shape[0]), k)
    keys = np.concatenate([wid * n * n + a.ravel() * n + b.ravel(),
                           wid * n * n + b.ravel() * n + a.ravel()])
    cells = np.unique(keys) % (n * n)
    emp = np.bincount(cells, minlength=n * n).astype(float)
    exact, _ = exact_pair_probabilities(g, cfg, "union")
    return _tv(emp / emp.sum(), exact.ravel() / exact.sum())


def test_criterion_3_walk_law():
    clock = _Clock(120.0)
    graphs = list(_atlas_graphs(6))
    step = max(_step_tv(g, p, q) for g in graphs for p, q in ((1.0, 1.0), (0.5, 2.0)))
    k4 = build_graph(list(itertools.combinations(range(4), 2)), 4)
    grid = (0.5, 1.0, 2.0)
    step_k4 = max(_step_tv(k4, p, q) for p in grid for q in grid)
    pair = max(_union_pair_tv(g, p, q, k) for g in graphs if g.n <= 5
               for p, q in ((1.0, 1.0), (0.5, 2.0)) for k in range(1, 5))
    ok = step <= 0.01 and step_k4 <= 0.01 and pair <= 0.02
    _report(3, ok, f"{len(graphs)} graphs: step TV {step:.4f}, K4 step TV {step_k4:.4f} (tol 0.01), "
                   f"pair TV {pair:.4f} (tol 0.02)", clock)


def _fd_rel(f, x, g, h=1e-6) -> float:
    fd = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        fd[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), np.linalg.norm(g), 1e-8))


def test_criterion_4_gradient_checks():
    clock = _Clock(10.0)
    rng = np.random.default_rng(4)
    worst_pair = worst_log = 0.0
    for i in range(100):
        d = int(rng.integers(1, 17))
        u, v = rng.normal(size=d), rng.normal(size=d)
        pos = bool(i % 2)
        _, gu, gv = pair_loss(u, v, pos)
        worst_pair = max(worst_pair, _fd_rel(lambda x: pair_loss(x, v, pos)[0], u, gu),
                         _fd_rel(lambda x: pair_loss(u, x, pos)[0], v, gv))
        n, d, K = int(rng.integers(5, 30)), int(rng.integers(1, 6)), int(rng.integers(2, 5))
        X, y = rng.normal(size=(n, d)), rng.integers(0, K, size=n)
        W = rng.normal(size=(d + 1, K))
        _, gW = logistic_loss_grad(W, X, y, 1e-4)
        worst_log = max(worst_log, _fd_rel(lambda w: logistic_loss_grad(w, X, y, 1e-4)[0], W, gW))
    ok = worst_pair <= 1e-5 and worst_log <= 1e-5
    _report(4, ok, f"max rel err pair_loss {worst_pair:.2e}, logistic {worst_log:.2e} (tol 1e-5)", clock)


@pytest.mark.slow
def test_criterion_5_rate_trend():
    clock = _Clock(1800.0)
    cfg = WalkConfig()
    med, med_closed = [], []
    for n in (400, 1000, 2500):
        params = planted_partition(n, 2, 1.0, 0.1, "logn_over_n")
        M, M_closed = mstar_walk_limit(params, cfg), mstar_unconstrained(params, cfg)
        devs, devs_closed = [], []
        for s in range(5):
            lg = sample_graph(params, n, seed=s, exact_balance=True)
            emb = train(lg.graph, cfg, TrainConfig(d=2, seed=s))
            devs.append(gram_deviation(emb.U, emb.V, M, lg.labels))
            devs_closed.append(gram_deviation(emb.U, emb.V, M_closed, lg.labels))
        med.append(float(np.median(devs)))
        med_closed.append(float(np.median(devs_closed)))
    ok = med[0] > med[1] > med[2]
    _report(5, ok, "median gram deviation n=400/1000/2500: "
                   + " > ".join(f"{m:.3f}" for m in med)
                   + " (sampler-matched M*); closed-form M*: "
                   + ", ".join(f"{m:.3f}" for m in med_closed), clock)


@pytest.mark.slow
def test_criterion_6_weak_consistency(tmp_path):
    clock = _Clock(1200.0)
    spec = ExperimentSpec(kappa=(2,), n=(2000,), beta=(0.05, 1.0), replications=10, seed_base=6)
    rows = run_experiment(spec, tmp_path / "c6.csv")
    errors = [r["error"] for r in rows if r["error"]]
    acc = {b: float(np.mean([r["accuracy"] for r in rows if r["beta"] == b])) for b in spec.beta}
    ok = not errors and acc[0.05] >= 0.90 and acc[1.0] <= 0.60
    _report(6, ok, f"mean accuracy beta=0.05: {acc[0.05]:.3f} (>= 0.90), "
                   f"beta=1: {acc[1.0]:.3f} (<= 0.60), {len(errors)} errors", clock)


def _brute_kmeans(X: np.ndarray, k: int) -> float:
    n = X.shape[0]
    lab = np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int8)
    total = (X ** 2).sum()
    gain = np.zeros(lab.shape[0])
    for c in range(k):
        mask = (lab == c).astype(float)
        cnt = mask.sum(1)
        s = mask @ X
        gain += np.where(cnt > 0, (s ** 2).sum(1) / np.maximum(cnt, 1), 0.0)
    return float(total - gain.max())


def test_criterion_7_kmeans_oracle():
    clock = _Clock(60.0)
    rng = np.random.default_rng(7)
    ratios = []
    for i in range(200):
        k = int(rng.integers(1, 4))
        n = int(rng.integers(k, 13))
        d = int(rng.integers(1, 3))
        X = rng.normal(size=(n, d)) + rng.normal(scale=3, size=(k, d))[rng.integers(0, k, n)]
        opt = _brute_kmeans(X, k)
        got = kmeans(X, k, restarts=50, seed=i).cost
        ratios.append(got / opt if opt > 1e-12 else (1.0 if got <= 1e-12 else math.inf))
    ratios = np.array(ratios)
    hit = float(np.mean(ratios <= 1 + 1e-9))
    ok = hit >= 0.95 and ratios.max() <= 1.2
    _report(7, ok, f"optimal in {hit:.1%} of 200 (>= 95%), worst ratio {ratios.max():.6f} (<= 1.2)", clock)


def test_criterion_8_metric_identities():
    clock = _Clock(1.0)
    c = [0, 0, 1, 1]
    checks = [
        misclassification(c, [1, 1, 0, 0]) == 0.0,
        misclassification(c, [0, 0, 0, 1]) == 0.25,
        misclassification([2, 0, 1, 1, 2], [2, 0, 1, 1, 2]) == 0.0,
        worst_case_misclassification(c, c) == 0.0,
        worst_case_misclassification(c, [0, 1, 1, 1]) == 0.5,
        nmi([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == pytest.approx(1.0, abs=1e-15),
        nmi(c, [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-15),
        ari(c, c) == pytest.approx(1.0, abs=1e-15),
        ari(c, [0, 1, 0, 1]) == pytest.approx(-0.5, abs=1e-15),
        ari([0, 0, 1, 2], [0, 1, 1, 1]) == ari([0, 1, 1, 1], [0, 0, 1, 2]),
        accuracy(c, [0, 0, 0, 1]) == 0.75,
    ]
    _report(8, all(checks), f"{sum(checks)}/{len(checks)} identities hold", clock)


@pytest.mark.slow
def test_criterion_9_constrained_disassortative():
    clock = _Clock(1200.0)
    n = 2000
    params = planted_partition(n, 2, 0.05, 1.0, "logn_over_n")
    # offset-1 window: with W = 10 even offsets mirror odd ones and cancel the signal
    cfg = WalkConfig(window_W=1)
    acc = {"constrained": [], "unconstrained": []}
    for s in range(5):
        lg = sample_graph(params, n, seed=s, exact_balance=True)
        for mode in acc:
            emb = train(lg.graph, cfg, TrainConfig(mode=mode, seed=s))
            acc[mode].append(accuracy(lg.labels, kmeans(emb.U, 2, seed=s).labels))
    con, unc = float(np.median(acc["constrained"])), float(np.median(acc["unconstrained"]))
    ok = con <= 0.60 and unc >= 0.80
    _report(9, ok, f"median accuracy constrained {con:.3f} (<= 0.60), unconstrained {unc:.3f} (>= 0.80)",
            clock)


def _load_polblogs():
    path = os.environ.get("N2VSBM_POLBLOGS")
    if not path or not Path(path).exists():
        return None
    if path.endswith(".gml"):
        text = Path(path).read_text()
        if "multigraph" not in text:
            text = re.sub(r"graph\s*\[", "graph [\n  multigraph 1", text, count=1)
        h = nx.parse_gml(text, label="id")
        ids = {v: i for i, v in enumerate(h.nodes())}
        g = build_graph([(ids[a], ids[b]) for a, b, *_ in h.edges], len(ids))
        labels = np.array([int(h.nodes[v]["value"]) for v in h.nodes()])
    else:
        loaded = load_edge_list(path, directed_input=True)
        g = loaded.graph
        labels = read_labels(os.environ["N2VSBM_POLBLOGS_LABELS"], loaded.original_ids)
    g, keep = largest_component(g)
    return g, labels[keep]


@pytest.mark.slow
def test_criterion_10_political_blogs():
    data = _load_polblogs()
    if data is None:
        LINES.append("CRITERION 10: SKIP political-blogs data not on disk (set N2VSBM_POLBLOGS)")
        pytest.skip("political-blogs data not on disk")
    clock = _Clock(900.0)
    g, labels = data
    means = {}
    for d in (16, 64):
        for alpha in (0.5, 0.75, 1.0):
            cfg = WalkConfig(unigram_alpha=alpha)
            scores = []
            for s in range(10):
                emb = train(g, cfg, TrainConfig(d=d, seed=s))
                scores.append(nmi(labels, kmeans(emb.U, 2, seed=s).labels))
            means[d, alpha] = float(np.mean(scores))
    ok = min(means.values()) >= 0.70
    _report(10, ok, "mean NMI per (d, alpha): "
                    + ", ".join(f"{k}: {v:.3f}" for k, v in means.items()) + " (>= 0.70)", clock)


@pytest.mark.slow
def test_criterion_11_node_classification():
    clock = _Clock(900.0)
    n = 2000
    params = planted_partition(n, 2, 1.0, 0.05, "logn_over_n")
    accs = []
    for s in range(10):
        lg = sample_graph(params, n, seed=100 + s, exact_balance=True)
        emb = train(lg.graph, WalkConfig(), TrainConfig(seed=s))
        accs.append(train_node_classifier(emb.U, lg.labels, train_frac=0.1, seed=s)[0])
    mean = float(np.mean(accs))
    _report(11, mean >= 0.90, f"mean held-out accuracy {mean:.3f} over 10 seeds (>= 0.90)", clock)


if __name__ == "__main__":
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
