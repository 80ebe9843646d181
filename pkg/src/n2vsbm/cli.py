"""Command-line entry point: ``n2vsbm <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import sys
import warnings

import numpy as np

from . import metrics
from .cluster import kmeans, spectral_clustering
from .downstream import link_prediction_experiment, train_node_classifier
from .errors import InputError, NumericalError
from .experiment import COLUMNS, fit_convergence_rate, load_spec, run_experiment
from .genmodel import ThetaSpec, planted_partition, sample_graph
from .graph import load_edge_list, read_labels, save_edge_list, write_labels
from .sampler import WalkConfig, sample_walks
from .theory import (build_target, factor_nice_matrix, mstar_constrained_planted, mstar_planted,
                     mstar_unconstrained, mstar_walk_limit)
from .trainer import TrainConfig, load_embeddings, save_embeddings, train


def _rho(value: str):
    if value in ("dense", "logn_over_n"):
        return value
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"rho must be dense, logn_over_n or a number, got {value!r}")


def _add_walk_args(ap: argparse.ArgumentParser) -> None:
    g = ap.add_argument_group("walk")
    g.add_argument("--p", type=float, default=1.0, help="return parameter")
    g.add_argument("--q", type=float, default=1.0, help="in-out parameter")
    g.add_argument("--walk-length", type=int, default=80, help="walk length k")
    g.add_argument("--window", type=int, default=10, help="window W")
    g.add_argument("--walks-per-start", type=int, default=10)
    g.add_argument("--negatives", type=int, default=5, help="negatives l per positive pair")
    g.add_argument("--unigram-alpha", type=float, default=0.75)
    g.add_argument("--start-mode", choices=("practical", "theory"), default="practical")


def _add_train_args(ap: argparse.ArgumentParser) -> None:
    g = ap.add_argument_group("training")
    g.add_argument("--dim", type=int, default=64)
    g.add_argument("--mode", choices=("unconstrained", "constrained"), default="unconstrained")
    g.add_argument("--lr", type=float, default=0.025)
    g.add_argument("--epochs", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1,
                   help="threads; more than one disables bit-reproducibility")


def _walk_cfg(a) -> WalkConfig:
    return WalkConfig(p=a.p, q=a.q, walk_len_k=a.walk_length, window_W=a.window,
                      walks_per_start=a.walks_per_start, negatives_l=a.negatives,
                      unigram_alpha=a.unigram_alpha, start_mode=a.start_mode)


def _train_cfg(a) -> TrainConfig:
    return TrainConfig(d=a.dim, mode=a.mode, lr=a.lr, epochs=a.epochs, seed=a.seed,
                       deterministic=a.workers == 1, workers=a.workers)


def _load_graph(path, largest_cc=False):
    return load_edge_list(path, largest_cc=largest_cc)


def cmd_generate(a) -> None:
    q = a.q_tilde if a.q_tilde is not None else a.p_tilde * a.beta
    theta = ThetaSpec("halfnormal", a.sigma) if a.theta == "halfnormal" else ThetaSpec()
    params = planted_partition(a.n, a.kappa, a.p_tilde, q, a.rho, theta)
    lg = sample_graph(params, a.n, seed=a.seed, exact_balance=a.exact_balance)
    save_edge_list(lg.graph, a.out)
    if a.labels_out:
        write_labels(a.labels_out, lg.labels)
    if a.thetas_out:
        with open(a.thetas_out, "w", encoding="utf-8") as fh:
            for v, t in enumerate(lg.thetas):
                fh.write(f"{v}\t{t!r}\n")
    print(f"n={lg.graph.n} m={lg.graph.m} rho={params.rho:.6g}", file=sys.stderr)


def cmd_walks(a) -> None:
    lg = _load_graph(a.graph)
    walks = sample_walks(lg.graph, _walk_cfg(a), seed=a.seed)
    ids = lg.original_ids
    with open(a.out, "w", encoding="utf-8") as fh:
        for w in walks:
            fh.write(" ".join(str(ids[v]) for v in w) + "\n")


def cmd_embed(a) -> None:
    lg = _load_graph(a.graph)
    emb = train(lg.graph, _walk_cfg(a), _train_cfg(a))
    save_embeddings(a.out, emb.U, binary=a.binary, ids=None if a.binary else lg.original_ids)
    if a.context_out:
        save_embeddings(a.context_out, emb.V, binary=a.binary, ids=None if a.binary else lg.original_ids)


def cmd_cluster(a) -> None:
    if a.method == "spectral":
        if not a.graph:
            raise InputError("spectral clustering needs --graph")
        lg = _load_graph(a.graph)
        labels = spectral_clustering(lg.graph, a.k, a.seed, restarts=a.restarts)
        write_labels(a.out, labels, lg.original_ids)
        return
    if not a.embedding:
        raise InputError("k-means clustering needs --embedding")
    X = load_embeddings(a.embedding)
    res = kmeans(X, a.k, a.restarts, a.seed)
    write_labels(a.out, res.labels, header=f"kmeans cost={res.cost!r}")


def cmd_evaluate(a) -> None:
    truth = read_labels(a.labels)
    pred = read_labels(a.pred)
    if truth.size != pred.size:
        raise InputError(f"label files cover {truth.size} and {pred.size} vertices")
    keep = (truth >= 0) & (pred >= 0)
    s = metrics.evaluate_all(truth[keep], pred[keep])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["L", "L_worst", "nmi", "ari", "accuracy"])
    w.writerow([repr(float(s[k])) for k in ("L", "L_worst", "nmi", "ari", "accuracy")])


def _print_matrix(name: str, M: np.ndarray) -> None:
    print(f"{name}:")
    for row in np.atleast_2d(M):
        print("  " + " ".join(f"{x: .10g}" for x in row))


def cmd_theory(a) -> None:
    q = a.q_tilde if a.q_tilde is not None else a.p_tilde * a.beta
    params = planted_partition(max(a.kappa, 2), a.kappa, a.p_tilde, q)
    walk_cfg = _walk_cfg(a)
    rows = []
    if a.mode == "constrained":
        alpha = mstar_constrained_planted(a.p_tilde, q, a.kappa, a.walk_length, a.negatives)
        beta = -alpha / (a.kappa - 1)
        M = np.full((a.kappa, a.kappa), beta)
        np.fill_diagonal(M, alpha)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            M = mstar_walk_limit(params, walk_cfg) if a.sampler_matched else mstar_unconstrained(params, walk_cfg)
            alpha, beta = mstar_planted(a.p_tilde, q, a.kappa, a.walk_length)
        if a.sampler_matched:
            alpha, beta = float(M[0, 0]), float(M[0, 1]) if a.kappa > 1 else float("nan")
    _print_matrix("M_star", M)
    print(f"alpha_star: {alpha!r}")
    print(f"beta_star: {beta!r}")
    rows += [("alpha_star", "", alpha), ("beta_star", "", beta)]
    rows += [("M_star", f"{i},{j}", M[i, j]) for i in range(a.kappa) for j in range(a.kappa)]
    if np.all(np.isfinite(M)):
        target = build_target(M, max(a.dim, a.kappa), a.mode)
        _print_matrix("factor_rows", target.factor_rows)
        print(f"delta: {target.delta!r}")
        rows.append(("delta", "", target.delta))
        rows += [("factor_rows", f"{i},{j}", target.factor_rows[i, j])
                 for i in range(a.kappa) for j in range(target.factor_rows.shape[1])]
        if a.kappa >= 2 and np.isfinite(alpha) and np.isfinite(beta):
            rows.append(("nice_delta", "", factor_nice_matrix(alpha, beta, a.kappa).delta))
    if a.rows:
        with open(a.rows, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["quantity", "index", "value"])
            w.writerows([(k, i, repr(float(v))) for k, i, v in rows])


def cmd_classify(a) -> None:
    X = load_embeddings(a.embedding)
    y = read_labels(a.labels)
    if y.size != X.shape[0]:
        raise InputError(f"{y.size} labels for {X.shape[0]} embedding rows")
    keep = y >= 0
    acc, model = train_node_classifier(X[keep], y[keep], a.train_frac, a.seed)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["train_frac", "seed", "accuracy", "iterations"])
    w.writerow([a.train_frac, a.seed, repr(float(acc)), model.n_iter])


def cmd_linkpred(a) -> None:
    lg = _load_graph(a.graph)
    res = link_prediction_experiment(lg.graph, _walk_cfg(a), _train_cfg(a), a.edge_frac,
                                     a.edge_mode, a.seed, a.pairs)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["edge_frac", "mode", "seed", "auc", "accuracy", "pairs"])
    w.writerow([a.edge_frac, a.edge_mode, a.seed, repr(float(res["auc"])), repr(float(res["accuracy"])), res["n_pairs"]])


_OVERRIDES = ("kappa", "n", "p_tilde", "beta", "rho", "theta", "p", "q", "k", "W", "l", "alpha",
              "d", "mode", "epochs", "lr", "seed_base", "clusterer", "replications", "output")


def cmd_experiment(a) -> None:
    overrides = {k: getattr(a, "set_" + k) for k in _OVERRIDES}
    spec = load_spec(a.config, overrides)
    out = a.out or spec.output
    rows = run_experiment(spec, out, a.workers)
    bad = sum(1 for r in rows if r["error"])
    print(f"{len(rows)} rows written to {out} ({bad} failed cells)", file=sys.stderr)


def cmd_ratefit(a) -> None:
    fits = fit_convergence_rate(a.report, a.metric, a.x, tuple(a.group_by.split(",")))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["group", "slope", "intercept", "r2", "points", "dropped", "note"])
    for f in fits:
        w.writerow(["|".join(str(v) for v in f.group), repr(float(f.slope)), repr(float(f.intercept)), repr(float(f.r2)),
                    f.n_points, f.dropped, f.note])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="n2vsbm", description="node2vec community detection on SBM graphs")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("generate", help="sample a planted-partition (DC)SBM graph")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--kappa", type=int, default=2)
    s.add_argument("--p-tilde", type=float, default=1.0)
    s.add_argument("--q-tilde", type=float, default=None)
    s.add_argument("--beta", type=float, default=0.05, help="q~ = p~ * beta unless --q-tilde is given")
    s.add_argument("--rho", type=_rho, default="logn_over_n")
    s.add_argument("--theta", choices=("constant", "halfnormal"), default="constant")
    s.add_argument("--sigma", type=float, default=0.25)
    s.add_argument("--exact-balance", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--labels-out")
    s.add_argument("--thetas-out")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("walks", help="sample node2vec walks, one per line")
    s.add_argument("--graph", required=True)
    _add_walk_args(s)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_walks)

    s = sub.add_parser("embed", help="train node2vec embeddings")
    s.add_argument("--graph", required=True)
    _add_walk_args(s)
    _add_train_args(s)
    s.add_argument("--binary", action="store_true")
    s.add_argument("--out", required=True)
    s.add_argument("--context-out")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("cluster", help="k-means on embeddings or spectral clustering on a graph")
    s.add_argument("--method", choices=("kmeans", "spectral"), default="kmeans")
    s.add_argument("--embedding")
    s.add_argument("--graph")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--restarts", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("evaluate", help="score predicted labels against the truth")
    s.add_argument("--labels", required=True)
    s.add_argument("--pred", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("theory", help="print limit matrices and target rows for a planted partition")
    s.add_argument("--kappa", type=int, default=2)
    s.add_argument("--p-tilde", type=float, default=0.8)
    s.add_argument("--q-tilde", type=float, default=None)
    s.add_argument("--beta", type=float, default=0.25)
    _add_walk_args(s)
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--mode", choices=("unconstrained", "constrained"), default="unconstrained")
    s.add_argument("--sampler-matched", action="store_true",
                   help="use the limit matched to the windowed trainer instead of the closed form")
    s.add_argument("--rows", help="also write machine-readable rows to this CSV")
    s.set_defaults(func=cmd_theory)

    s = sub.add_parser("classify", help="node classification from a labeled fraction")
    s.add_argument("--embedding", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--train-frac", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("linkpred", help="link prediction with held-out edges")
    s.add_argument("--graph", required=True)
    _add_walk_args(s)
    _add_train_args(s)
    s.add_argument("--edge-frac", type=float, default=0.5)
    s.add_argument("--edge-mode", choices=("average", "hadamard"), default="average")
    s.add_argument("--pairs", type=int, default=None)
    s.set_defaults(func=cmd_linkpred)

    s = sub.add_parser("experiment", help="run a parameter sweep from an INI config")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=1)
    for key in _OVERRIDES:
        s.add_argument("--" + key.replace("_", "-"), dest="set_" + key, default=None,
                       help=f"override {key}")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("ratefit", help="log-log convergence-rate fit of a report column")
    s.add_argument("--report", required=True)
    s.add_argument("--metric", default="gram_deviation", choices=COLUMNS)
    s.add_argument("--x", default="n")
    s.add_argument("--group-by", default="kappa,beta")
    s.set_defaults(func=cmd_ratefit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
