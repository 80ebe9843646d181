"""Parameter sweeps over the SBM -> walks -> embedding -> clustering pipeline."""
from __future__ import annotations

import configparser
import csv
import io
import itertools
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import metrics
from .cluster import kmeans, spectral_clustering
from .errors import InputError, UnsupportedScenarioError
from .genmodel import ThetaSpec, planted_partition, rho_from_rule, sample_graph
from .sampler import WalkConfig
from .theory import (build_target, gram_deviation, mstar_constrained_planted, mstar_walk_limit,
                     procrustes_distance)
from .trainer import TrainConfig, train

COLUMNS = [
    "setting", "replicate", "seed", "kappa", "n", "p_tilde", "beta", "q_tilde", "rho_rule", "rho",
    "theta", "p", "q", "k", "W", "l", "alpha", "d", "mode", "epochs", "lr", "clusterer",
    "accuracy", "L_worst", "nmi", "ari", "gram_deviation", "procrustes", "wall_time", "error",
]
CLUSTERERS = ("node2vec", "spectral")


@dataclass(frozen=True)
class ExperimentSpec:
    """A Cartesian sweep. ``q_tilde = p_tilde * beta`` in every setting."""

    kappa: tuple[int, ...] = (2,)
    n: tuple[int, ...] = (500,)
    p_tilde: float = 1.0
    beta: tuple[float, ...] = (0.05,)
    rho: str = "logn_over_n"
    theta: str = "constant"
    theta_sigma: float = 0.25
    p: tuple[float, ...] = (1.0,)
    q: tuple[float, ...] = (1.0,)
    k: int = 80
    W: int = 10
    l: int = 5
    alpha: tuple[float, ...] = (0.75,)
    walks_per_start: int = 10
    d: int = 64
    mode: str = "unconstrained"
    epochs: int = 1
    lr: float = 0.025
    seed_base: int = 0
    clusterer: str = "node2vec"
    replications: int = 10
    restarts: int = 10
    record_time: bool = True
    output: str = "report.csv"

    def __post_init__(self):
        for name in ("kappa", "n", "beta", "p", "q", "alpha"):
            if len(getattr(self, name)) == 0:
                raise InputError(f"list {name!r} must be nonempty")
        if self.replications < 1:
            raise InputError("replications must be >= 1")
        if self.clusterer not in CLUSTERERS:
            raise InputError(f"unknown clusterer {self.clusterer!r}")
        rho_from_rule(self.rho if self.rho in ("dense", "logn_over_n") else float(self.rho), 100)

    def settings(self) -> list[dict]:
        grid = itertools.product(self.kappa, self.n, self.beta, self.p, self.q, self.alpha)
        return [dict(kappa=a, n=b, beta=c, p=d, q=e, alpha=f) for a, b, c, d, e, f in grid]


_LISTS = {"kappa": int, "n": int, "beta": float, "p": float, "q": float, "alpha": float}
_SCALARS = {"p_tilde": float, "rho": str, "theta": str, "theta_sigma": float, "k": int, "W": int,
            "l": int, "walks_per_start": int, "d": int, "mode": str, "epochs": int, "lr": float,
            "seed_base": int, "clusterer": str, "replications": int, "restarts": int,
            "record_time": lambda s: str(s).strip().lower() in ("1", "true", "yes", "on"),
            "output": str}
_SECTIONS = ("model", "walk", "train", "pipeline", "output")


def _parse_value(key: str, raw):
    try:
        if key in _LISTS:
            items = raw if isinstance(raw, (list, tuple)) else str(raw).split(",")
            return tuple(_LISTS[key](str(x).strip()) for x in items if str(x).strip())
        if key in _SCALARS:
            return _SCALARS[key](raw)
    except ValueError:
        raise InputError(f"bad value for {key!r}: {raw!r}") from None
    raise InputError(f"unknown key {key!r}")


def spec_from_mapping(values: dict, base: ExperimentSpec | None = None) -> ExperimentSpec:
    base = base or ExperimentSpec()
    parsed = {k: _parse_value(k, v) for k, v in values.items() if v is not None}
    return replace(base, **parsed)


def load_spec(path: str | Path, overrides: dict | None = None) -> ExperimentSpec:
    """Read an INI file with sections ``model``, ``walk``, ``train``, ``pipeline``, ``output``."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        if not cp.read(path, encoding="utf-8"):
            raise InputError(f"cannot read config {path}")
    except configparser.Error as exc:
        raise InputError(f"{path}: {exc}") from None
    values = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise InputError(f"{path}: unknown section [{section}]")
        values.update(cp.items(section))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return spec_from_mapping(values)


def cell_seed(seed_base: int, setting: int, replicate: int) -> int:
    """64-bit seed that depends only on the cell coordinates."""
    a, b = np.random.SeedSequence([seed_base, setting, replicate]).generate_state(2)
    return int((int(a) << 32) | int(b))


def _theory_columns(spec, s, lg, emb, walk_cfg, params):
    if spec.clusterer != "node2vec":
        return "", ""
    try:
        if spec.mode == "constrained":
            if not params.theta.is_constant or s["kappa"] < 2:
                raise UnsupportedScenarioError("constrained limit needs a planted SBM")
            a = mstar_constrained_planted(spec.p_tilde, spec.p_tilde * s["beta"], s["kappa"],
                                          spec.k, spec.l)
            M = np.full((s["kappa"], s["kappa"]), -a / (s["kappa"] - 1))
            np.fill_diagonal(M, a)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                M = mstar_walk_limit(params, walk_cfg)
        if not np.all(np.isfinite(M)):
            raise UnsupportedScenarioError("unbounded limit")
        gd = gram_deviation(emb.U, emb.V, M, lg.labels)
        try:
            target = build_target(M, spec.d, spec.mode)
            pd = procrustes_distance(emb.U, target.factor_rows, lg.labels)
        except InputError:
            pd = ""
        return gd, pd
    except (UnsupportedScenarioError, InputError):
        return "", ""


def run_cell(spec: ExperimentSpec, index: int, replicate: int) -> dict:
    """Run one (setting, replicate) cell; failures become an error row."""
    s = spec.settings()[index]
    seed = cell_seed(spec.seed_base, index, replicate)
    q_tilde = spec.p_tilde * s["beta"]
    row = dict(setting=index, replicate=replicate, seed=seed, kappa=s["kappa"], n=s["n"],
               p_tilde=spec.p_tilde, beta=s["beta"], q_tilde=q_tilde, rho_rule=spec.rho, rho="",
               theta=spec.theta, p=s["p"], q=s["q"], k=spec.k, W=spec.W, l=spec.l, alpha=s["alpha"],
               d=spec.d, mode=spec.mode, epochs=spec.epochs, lr=spec.lr, clusterer=spec.clusterer,
               accuracy="", L_worst="", nmi="", ari="", gram_deviation="", procrustes="",
               wall_time="", error="")
    t0 = time.perf_counter()
    try:
        rule = spec.rho if spec.rho in ("dense", "logn_over_n") else float(spec.rho)
        theta = ThetaSpec(spec.theta, spec.theta_sigma) if spec.theta != "constant" else ThetaSpec()
        params = planted_partition(s["n"], s["kappa"], spec.p_tilde, q_tilde, rule, theta)
        row["rho"] = params.rho
        gseed, tseed, cseed = np.random.SeedSequence(seed).generate_state(3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            lg = sample_graph(params, s["n"], seed=int(gseed), exact_balance=True)
        walk_cfg = WalkConfig(p=s["p"], q=s["q"], walk_len_k=spec.k, window_W=spec.W,
                              walks_per_start=spec.walks_per_start, negatives_l=spec.l,
                              unigram_alpha=s["alpha"])
        emb = None
        if spec.clusterer == "node2vec":
            tcfg = TrainConfig(d=spec.d, mode=spec.mode, lr=spec.lr, epochs=spec.epochs, seed=int(tseed))
            emb = train(lg.graph, walk_cfg, tcfg)
            pred = kmeans(emb.U, s["kappa"], spec.restarts, int(cseed)).labels
        else:
            pred = spectral_clustering(lg.graph, s["kappa"], int(cseed), restarts=spec.restarts)
        scores = metrics.evaluate_all(lg.labels, pred)
        row.update(accuracy=scores["accuracy"], L_worst=scores["L_worst"], nmi=scores["nmi"],
                   ari=scores["ari"])
        if emb is not None and s["p"] == 1.0 and s["q"] == 1.0:
            row["gram_deviation"], row["procrustes"] = _theory_columns(spec, s, lg, emb, walk_cfg, params)
    except Exception as exc:  # noqa: BLE001 - a failing cell must not abort the sweep
        row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    if spec.record_time:
        row["wall_time"] = round(time.perf_counter() - t0, 6)
    return row


def _run_packed(args):
    return run_cell(*args)


def run_experiment(spec: ExperimentSpec, out: str | Path | None = None, workers: int = 1) -> list[dict]:
    """Run every cell, sort rows by (setting, replicate) and write the CSV report."""
    cells = [(spec, i, r) for i in range(len(spec.settings())) for r in range(spec.replications)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_run_packed, cells))
    else:
        rows = [run_cell(*c) for c in cells]
    rows.sort(key=lambda r: (r["setting"], r["replicate"]))
    if out is not None:
        write_report(rows, out)
    return rows


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_report(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in COLUMNS])


_INT_COLS = {"setting", "replicate", "seed", "kappa", "n", "k", "W", "l", "d", "epochs"}
_STR_COLS = {"rho_rule", "theta", "mode", "clusterer", "error"}


def read_report(path_or_text) -> list[dict]:
    """Parse a report; numeric columns come back as ``int``/``float``, blanks as ``None``."""
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = path_or_text
    out = []
    for raw in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in raw.items():
            if k in _STR_COLS:
                row[k] = v
            elif v == "" or v is None:
                row[k] = None
            elif k in _INT_COLS:
                row[k] = int(v)
            else:
                row[k] = float(v)
        out.append(row)
    return out


@dataclass
class RateFit:
    group: tuple
    slope: float = math.nan
    intercept: float = math.nan
    r2: float = math.nan
    n_points: int = 0
    dropped: int = 0
    note: str = ""


def fit_convergence_rate(report, metric: str, x: str = "n",
                         group_by: tuple[str, ...] = ("kappa", "beta")) -> list[RateFit]:
    """Least-squares fit of ``log(metric)`` on ``log(x)`` per group.

    Rows with a non-positive or missing metric are dropped and counted; groups
    with fewer than three distinct ``x`` values are reported with a note.
    """
    rows = read_report(report) if isinstance(report, (str, Path)) else list(report)
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault(tuple(r.get(g) for g in group_by), []).append(r)
    fits = []
    for key in sorted(groups, key=lambda t: tuple(str(v) for v in t)):
        fit = RateFit(group=key)
        xs, ys = [], []
        for r in groups[key]:
            m = r.get(metric)
            if m is None or (isinstance(m, str) and not m) or float(m) <= 0 or not math.isfinite(float(m)):
                fit.dropped += 1
                continue
            xs.append(math.log(float(r[x])))
            ys.append(math.log(float(m)))
        fit.n_points = len(xs)
        if len(set(xs)) < 3:
            fit.note = "skipped: fewer than 3 distinct x values"
            fits.append(fit)
            continue
        X = np.asarray(xs)
        Y = np.asarray(ys)
        slope, intercept = np.polyfit(X, Y, 1)
        resid = Y - (slope * X + intercept)
        ss_tot = float(((Y - Y.mean()) ** 2).sum())
        fit.slope, fit.intercept = float(slope), float(intercept)
        fit.r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
        fits.append(fit)
    return fits
