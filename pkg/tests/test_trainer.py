import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import ortho_group

from n2vsbm.cluster import kmeans
from n2vsbm.errors import InputError, TrainingError
from n2vsbm.graph import build_graph
from n2vsbm.metrics import accuracy
from n2vsbm.sampler import WalkConfig, exact_pair_probabilities, sample_pairs
from n2vsbm.trainer import (EmbeddingPair, TrainConfig, empirical_risk, empirical_risk_grad,
                            init_embeddings, load_embeddings, pair_loss, save_embeddings, sigmoid,
                            train)

K5K5 = build_graph([(a + o, b + o) for o in (0, 5) for a, b in itertools.combinations(range(5), 2)], 10)


def small_graph():
    return build_graph([(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)], 5)


def exact_pairs(g, k=3, W=2):
    return exact_pair_probabilities(g, WalkConfig(walk_len_k=k, window_W=W, negatives_l=2))


def test_pair_loss_at_zero():
    u = np.zeros(3)
    loss, gu, gv = pair_loss(u, u, True)
    assert loss == pytest.approx(math.log(2))
    u, v = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    loss, gu, gv = pair_loss(u, v, True)
    assert loss == pytest.approx(math.log(2)) and np.allclose(gu, -0.5 * v) and np.allclose(gv, -0.5 * u)
    loss, gu, gv = pair_loss(u, v, False)
    assert loss == pytest.approx(math.log(2)) and np.allclose(gu, 0.5 * v)
    with pytest.raises(InputError):
        pair_loss(np.zeros(2), np.zeros(3), True)


def test_sigmoid_stable():
    x = np.array([-700.0, -50.0, 0.0, 50.0, 700.0])
    s = sigmoid(x)
    assert np.all(np.isfinite(s)) and s[0] >= 0 and s[-1] == 1.0
    for val in (700.0, -700.0):
        loss, gu, gv = pair_loss(np.array([val]), np.array([1.0]), True)
        assert np.isfinite(loss) and np.all(np.isfinite(gu))


def _fd_check(u, v, pos, h=1e-5):
    _, gu, gv = pair_loss(u, v, pos)
    for grad, which in ((gu, 0), (gv, 1)):
        num = np.zeros_like(grad)
        for t in range(u.size):
            e = np.zeros_like(u)
            e[t] = h
            a, b = (u + e, v) if which == 0 else (u, v + e)
            c, d = (u - e, v) if which == 0 else (u, v - e)
            num[t] = (pair_loss(a, b, pos)[0] - pair_loss(c, d, pos)[0]) / (2 * h)
        assert np.linalg.norm(num - grad) <= 1e-6 * max(np.linalg.norm(num), 1e-8)


def test_pair_loss_gradient_fd(rng):
    for _ in range(50):
        d = int(rng.integers(1, 8))
        u, v = rng.normal(size=d), rng.normal(size=d)
        _fd_check(u, v, bool(rng.integers(2)))


def test_init_balanced_and_reproducible():
    cfg = TrainConfig(d=8, seed=3)
    e = init_embeddings(50, cfg)
    assert e.balance_gap() <= 1e-10 and not e.tied
    assert not np.array_equal(e.U, e.V)
    assert np.array_equal(init_embeddings(50, cfg).U, e.U)
    c = init_embeddings(50, TrainConfig(d=8, seed=3, mode="constrained"))
    assert c.tied and c.V is c.U
    assert np.array_equal(c.U, init_embeddings(50, TrainConfig(d=8, seed=3, mode="constrained")).U)
    z = init_embeddings(5, TrainConfig(d=4, init_scale=0.0))
    assert not z.U.any() and not z.V.any()


def test_config_validation():
    with pytest.raises(InputError):
        TrainConfig(d=0)
    with pytest.raises(InputError):
        TrainConfig(lr=-1.0)
    with pytest.raises(InputError):
        TrainConfig(mode="tied")


def test_risk_at_zero():
    g = small_graph()
    P, N = exact_pairs(g)
    Z = np.zeros((5, 3))
    off = ~np.eye(5, dtype=bool)
    assert empirical_risk((P, N), Z, Z) == pytest.approx(math.log(2) * (P[off].sum() + N[off].sum()))


def test_risk_from_pair_stream():
    g = small_graph()
    ps = sample_pairs(g, WalkConfig(walk_len_k=4, window_W=2, walks_per_start=5), seed=0)
    Z = np.zeros((5, 2))
    pos = ps.positive[ps.positive[:, 0] != ps.positive[:, 1]]
    neg = ps.negative[ps.negative[:, 0] != ps.negative[:, 1]]
    expected = math.log(2) * (len(pos) + len(neg)) / len(ps.positive)
    assert empirical_risk(ps, Z, Z) == pytest.approx(expected)


def test_risk_gradient_fd(rng):
    g = small_graph()
    pairs = exact_pairs(g)
    U, V = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    _, dU, dV = empirical_risk_grad(pairs, U, V)
    h = 1e-6
    for X, G in ((U, dU), (V, dV)):
        num = np.zeros_like(X)
        for idx in np.ndindex(X.shape):
            X[idx] += h
            up = empirical_risk(pairs, U, V)
            X[idx] -= 2 * h
            dn = empirical_risk(pairs, U, V)
            X[idx] += h
            num[idx] = (up - dn) / (2 * h)
        assert np.linalg.norm(num - G) / np.linalg.norm(num) <= 1e-5


def test_tied_gradient_fd(rng):
    g = small_graph()
    pairs = exact_pairs(g)
    U = rng.normal(size=(5, 2))
    _, dU, _ = empirical_risk_grad(pairs, U, U, tied=True)
    h = 1e-6
    num = np.zeros_like(U)
    for idx in np.ndindex(U.shape):
        U[idx] += h
        up = empirical_risk(pairs, U, U)
        U[idx] -= 2 * h
        dn = empirical_risk(pairs, U, U)
        U[idx] += h
        num[idx] = (up - dn) / (2 * h)
    assert np.linalg.norm(num - dU) / np.linalg.norm(num) <= 1e-5


def _gd(pairs, U, V, lr, iters):
    prev = empirical_risk(pairs, U, V)
    gaps = []
    for _ in range(iters):
        r, dU, dV = empirical_risk_grad(pairs, U, V)
        assert r <= prev + 1e-12
        prev = r
        U, V = U - lr * dU, V - lr * dV
        gaps.append(np.linalg.norm(U.T @ U - V.T @ V))
    return U, V, np.array(gaps)


def _balance_problem():
    g = build_graph([(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (3, 4), (4, 5)], 6)
    e = init_embeddings(6, TrainConfig(d=3, seed=1, init_scale=0.5))
    return exact_pairs(g, k=4, W=2), e.U.copy(), e.V.copy()


def test_full_batch_descent_monotone():
    pairs, U, V = _balance_problem()
    r0 = empirical_risk(pairs, U, V)
    U, V, _ = _gd(pairs, U, V, 0.05, 1000)
    assert empirical_risk(pairs, U, V) < r0


def test_balance_preserved_over_1000_steps():
    # gradient flow conserves U^T U - V^T V; a gradient step only perturbs it at second order in lr
    pairs, U, V = _balance_problem()
    _, _, gaps = _gd(pairs, U, V, 1e-5, 1000)
    assert gaps.max() <= 1e-8


def test_balance_drift_is_second_order():
    pairs, U, V = _balance_problem()
    g1 = _gd(pairs, U, V, 1e-3, 200)[2][-1]
    g2 = _gd(pairs, U, V, 1e-4, 200)[2][-1]
    assert 50 < g1 / g2 < 200


@given(st.integers(0, 10_000))
def test_risk_rotation_invariance(seed):
    rng = np.random.default_rng(seed)
    pairs = exact_pairs(small_graph())
    U, V = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    Q = ortho_group.rvs(3, random_state=seed)
    assert abs(empirical_risk(pairs, U, V) - empirical_risk(pairs, U @ Q, V @ Q)) <= 1e-10


def test_global_minimizer_log_ratio():
    g = build_graph([(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], 4)
    P, N = exact_pairs(g, k=3, W=2)
    rng = np.random.default_rng(0)
    U, V = 0.1 * rng.normal(size=(4, 4)), 0.1 * rng.normal(size=(4, 4))
    # plain gradient descent with a diagonal that carries no loss
    for _ in range(60_000):
        _, dU, dV = empirical_risk_grad((P, N), U, V)
        U, V = U - 0.5 * dU, V - 0.5 * dV
    off = ~np.eye(4, dtype=bool)
    target = np.log(P / N)
    assert np.allclose((U @ V.T)[off], target[off], atol=1e-4)


def test_lr_zero_leaves_init():
    cfg = TrainConfig(d=4, lr=0.0, seed=2)
    e = train(K5K5, WalkConfig(walk_len_k=10, walks_per_start=2), cfg)
    i = init_embeddings(10, cfg)
    assert np.array_equal(e.U, i.U) and np.array_equal(e.V, i.V)


def test_deterministic_bit_identical():
    cfg = TrainConfig(d=8, seed=5, epochs=2)
    wc = WalkConfig(walk_len_k=20, walks_per_start=3)
    a, b = train(K5K5, wc, cfg), train(K5K5, wc, cfg)
    assert np.array_equal(a.U, b.U) and np.array_equal(a.V, b.V)


@pytest.mark.parametrize("seed", range(10))
def test_two_cliques_recovered(seed):
    e = train(K5K5, WalkConfig(), TrainConfig(d=2, seed=seed))
    labels = kmeans(e.U, 2, seed=seed).labels
    assert accuracy(np.repeat([0, 1], 5), labels) == 1.0


def test_constrained_mode_ties():
    e = train(K5K5, WalkConfig(walk_len_k=20, walks_per_start=2), TrainConfig(d=3, mode="constrained"))
    assert e.tied and e.U is e.V


def test_caps_enforced():
    cfg = TrainConfig(d=4, lr=0.5, cap_inf=0.3, cap_2inf=0.5, seed=1)
    e = train(K5K5, WalkConfig(walk_len_k=20, walks_per_start=3), cfg)
    assert np.abs(e.U).max() <= 0.3 + 1e-12 and np.abs(e.V).max() <= 0.3 + 1e-12
    assert np.linalg.norm(e.U, axis=1).max() <= 0.5 + 1e-12


def test_nan_raises_training_error():
    init = init_embeddings(10, TrainConfig(d=2))
    init.U[3, 0] = np.nan
    with pytest.raises(TrainingError) as info:
        train(K5K5, WalkConfig(walk_len_k=5, walks_per_start=1), TrainConfig(d=2), init=init)
    assert info.value.step >= 1


def test_empty_graph_rejected():
    with pytest.raises(InputError):
        train(build_graph([], 3), WalkConfig(), TrainConfig())


def test_parallel_mode_runs():
    e = train(K5K5, WalkConfig(walk_len_k=20), TrainConfig(d=2, deterministic=False, workers=2))
    assert np.isfinite(e.U).all()


@pytest.mark.parametrize("binary", [False, True])
def test_embedding_roundtrip(tmp_path, binary, rng):
    X = rng.normal(size=(7, 3))
    save_embeddings(tmp_path / "e", X, binary=binary)
    assert np.array_equal(load_embeddings(tmp_path / "e"), X)
    head = (tmp_path / "e").read_bytes().split(b"\n")[0]
    assert head == b"7 3"


def test_embedding_bad_header(tmp_path):
    (tmp_path / "e").write_text("oops\n")
    with pytest.raises(InputError):
        load_embeddings(tmp_path / "e")
