"""Simulation harness: AR(1) Gaussian designs with planted main effects and
pairwise interactions, selection metrics, and a replication driver."""

from __future__ import annotations

import csv
import io
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Dataset, standardize
from .pipelines import (InteractionModel, back_transform, fit_unipairs, fit_unipairs_2stage,
                        predict)
from .solver import LassoProblem, cross_validate, fit_at_best

_T1 = (0, 1, 2, 3, 4, 5)
_T3_HIER = ((0, 2), (1, 3), (2, 3), (0, 7), (1, 7), (4, 9))
STRUCTURES = {
    "mixed": (_T1, ((0, 4), (3, 17), (9, 10), (8, 16), (0, 12), (3, 16))),
    "hierarchical": (_T1, _T3_HIER),
    "anti_hierarchical": (_T1, ((10, 12), (11, 13), (12, 13), (10, 17), (11, 17), (14, 19))),
    "interaction_only": ((), _T3_HIER),
    "main_only": (_T1, ()),
}
MAIN_COEF = 2.0
INTERACTION_COEF = 3.0

CSV_HEADER = ["spec_id", "structure", "n", "p", "rho", "snr", "method", "rep",
              "test_r2", "train_r2", "cov_main", "cov_int", "cov_both",
              "fdr_main", "fdr_int", "fdr_both", "size_main", "size_int", "size_both"]
METRIC_KEYS = CSV_HEADER[8:]


class StructureTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SimulationSpec:
    n: int
    p: int
    rho: float
    structure: str
    snr: float
    n_reps: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.snr <= 0:
            raise ValueError("snr must be positive")
        if self.n < 5 or self.n_reps < 1:
            raise ValueError("need n >= 5 and at least one replicate")
        t1, t3 = STRUCTURES[self.structure]
        top = max(list(t1) + [k for pair in t3 for k in pair], default=-1)
        if self.p < 20 or self.p <= top:
            raise StructureTooLarge(
                f"structure {self.structure!r} needs p >= {max(20, top + 1)}, got {self.p}")

    @property
    def truth(self):
        return STRUCTURES[self.structure]


def ar1_design(rng: np.random.Generator, n: int, p: int, rho: float) -> np.ndarray:
    """Rows from N(0, Sigma) with Sigma_ab = rho^|a-b| via the AR(1) recursion."""
    Z = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[:, 0] = Z[:, 0]
    s = math.sqrt(1.0 - rho * rho)
    for a in range(1, p):
        X[:, a] = rho * X[:, a - 1] + s * Z[:, a]
    return X


def signal_components(X: np.ndarray, structure: str):
    """Main and interaction parts of the mean after orthogonalization and rescaling."""
    t1, t3 = STRUCTURES[structure]
    n, p = X.shape
    beta = np.zeros(p)
    beta[list(t1)] = MAIN_COEF
    mu_main = X @ beta
    mu_int = np.zeros(n)
    for j, k in t3:
        mu_int += INTERACTION_COEF * X[:, j] * X[:, k]
    if t1 and t3:
        F = X[:, list(t1)]
        proj = F @ np.linalg.lstsq(F, mu_int, rcond=None)[0]
        mu_main = mu_main + proj
        mu_int = mu_int - proj
    v_main, v_int = np.var(mu_main), np.var(mu_int)
    if v_main > 0 and v_int > 0:
        mu_int = mu_int * math.sqrt(v_main / v_int)
    return mu_main, mu_int


def noise_for(rng, mu: np.ndarray, snr: float) -> np.ndarray:
    """Gaussian noise rescaled so that Var(mu) / Var(noise) equals ``snr``."""
    sigma = math.sqrt(np.var(mu) / snr)
    eps = rng.standard_normal(mu.shape[0])
    return eps * (sigma / np.std(eps))


def _draw(rng, spec: SimulationSpec) -> Dataset:
    X = ar1_design(rng, spec.n, spec.p, spec.rho)
    mu_main, mu_int = signal_components(X, spec.structure)
    mu = mu_main + mu_int
    return Dataset(X, mu + noise_for(rng, mu, spec.snr))


def generate(spec: SimulationSpec, rep: int):
    """Train and test draws for one replicate, plus the true supports."""
    rng = np.random.default_rng([spec.seed, rep])
    train = _draw(rng, spec)
    test = _draw(rng, spec)
    t1, t3 = spec.truth
    return train, test, (tuple(t1), tuple(t3))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def r2(y, yhat) -> float:
    y = np.asarray(y, dtype=np.float64)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")


def _cov_fdr(selected: set, true: set):
    cov = len(selected & true) / len(true) if true else 1.0
    fdr = len(selected - true) / len(selected) if selected else 0.0
    return cov, fdr


def selection_metrics(active_main, active_int, truth) -> dict:
    t1, t3 = truth
    sm = set(int(j) for j in active_main)
    si = set(tuple(sorted(pair)) for pair in active_int)
    tm = set(t1)
    ti = set(tuple(sorted(pair)) for pair in t3)
    cov_m, fdr_m = _cov_fdr(sm, tm)
    cov_i, fdr_i = _cov_fdr(si, ti)
    both_sel = {("m", j) for j in sm} | {("i", pr) for pr in si}
    both_true = {("m", j) for j in tm} | {("i", pr) for pr in ti}
    cov_b, fdr_b = _cov_fdr(both_sel, both_true)
    return {"cov_main": cov_m, "cov_int": cov_i, "cov_both": cov_b,
            "fdr_main": fdr_m, "fdr_int": fdr_i, "fdr_both": fdr_b,
            "size_main": len(sm), "size_int": len(si), "size_both": len(sm) + len(si)}


def evaluate(model: InteractionModel, truth, train: Dataset, test: Dataset) -> dict:
    row = {"test_r2": r2(test.y, predict(model, test.X)),
           "train_r2": r2(train.y, predict(model, train.X))}
    row.update(selection_metrics(model.active_main, model.active_interactions, truth))
    return row


def jaccard(a: Iterable, b: Iterable) -> float:
    a, b = set(a), set(b)
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def stability(sets: Sequence[Iterable]) -> float:
    """Average number of shared elements over unordered pairs of replicates."""
    sets = [set(s) for s in sets]
    if len(sets) < 2:
        return float("nan")
    shared = [len(a & b) for a, b in itertools.combinations(sets, 2)]
    return float(np.mean(shared))


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

def _plain_lasso(train: Dataset, pairs, k, seed, method, n_lambda=100,
                 ratio=1e-3) -> InteractionModel:
    design = standardize(train)
    Xs = design.Xs
    Z = [Xs[:, design.position[j]] * Xs[:, design.position[kk]] for j, kk in pairs]
    F = np.column_stack([Xs] + Z) if Z else Xs
    seq = np.random.SeedSequence(seed).spawn(3)[0]
    problem = LassoProblem(F, train.y, intercept=True)
    cv = cross_validate(problem, k=k, seed=seq, n_lambda=n_lambda, ratio=ratio)
    fit = fit_at_best(problem, cv)
    q = design.kept.size
    beta_s = np.zeros(design.p)
    beta_s[design.kept] = fit.coefs[:q]
    gamma_s = {pair: float(c) for pair, c in zip(pairs, fit.coefs[q:]) if c != 0}
    beta0, beta, gamma = back_transform(fit.intercept, beta_s, gamma_s, design.mu, design.sigma)
    return InteractionModel(
        method=method, family="gaussian", hierarchy="none", beta0=beta0, main=beta,
        interactions=gamma, mu=design.mu, sigma=design.sigma,
        feature_names=tuple(train.feature_names), seed=seed,
        scan_summary={"n_pairs_scanned": 0, "n_selected": len(pairs), "r_hat": 0},
        gamma_hat=tuple(pairs), beta0_s=fit.intercept, beta_s=beta_s, gamma_s=gamma_s,
        info={"lambda": cv.lambda_best, "cv_error": cv.cv_best,
              "best_index": cv.best_index, "n_lambda": len(cv.lambda_path)})


def lasso_baseline(train: Dataset, k: int = 10, seed: int = 0) -> InteractionModel:
    """Cross-validated lasso on the standardized main effects only."""
    return _plain_lasso(train, [], k, seed, "lasso-baseline")


def all_pairs_lasso(train: Dataset, k: int = 10, seed: int = 0) -> InteractionModel:
    """Unscreened control: lasso over every main effect and every pairwise product.

    With thousands of columns and a few hundred rows the small-penalty end
    of the path is near interpolation and slow to converge, so the grid
    stops at ``0.05 * lambda_max``; the CV minimum sits well inside it.
    """
    kept = standardize(train).kept
    pairs = [(int(a), int(b)) for a, b in itertools.combinations(kept, 2)]
    return _plain_lasso(train, pairs, k, seed, "all-pairs-lasso", n_lambda=50, ratio=0.05)


METHODS: dict[str, Callable] = {
    "unipairs": lambda d, k, seed: fit_unipairs(d, k=k, seed=seed, threads=1),
    "unipairs-2stage": lambda d, k, seed: fit_unipairs_2stage(d, k=k, seed=seed, threads=1),
    "lasso-baseline": lambda d, k, seed: lasso_baseline(d, k=k, seed=seed),
    "all-pairs-lasso": lambda d, k, seed: all_pairs_lasso(d, k=k, seed=seed),
}
DEFAULT_METHODS = ("unipairs", "unipairs-2stage", "lasso-baseline")


def default_grid(structures=tuple(STRUCTURES), n_reps: int = 20, seed: int = 0):
    """Desk-scale grid: (n, p) in {(300, 100), (100, 200)}, rho in {0, 0.5}, SNR in {0.5, 3}."""
    return [SimulationSpec(n, p, rho, s, snr, n_reps, seed)
            for s in structures
            for n, p in ((300, 100), (100, 200))
            for rho in (0.0, 0.5)
            for snr in (0.5, 3.0)]


# ---------------------------------------------------------------------------
# Replication driver
# ---------------------------------------------------------------------------

@dataclass
class GridResult:
    specs: list
    methods: list
    rows: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)
    selections: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        agg = {(a["spec_id"], a["method"], a["rep"]): a for a in self.aggregates}
        for si, spec in enumerate(self.specs):
            for method in self.methods:
                block = [r for r in self.rows if r["spec_id"] == si and r["method"] == method]
                for r in sorted(block, key=lambda r: r["rep"]):
                    w.writerow(_csv_row(r))
                for tag in ("mean", "se"):
                    w.writerow(_csv_row(agg[(si, method, tag)]))
        return buf.getvalue()

    def stability(self, spec_id: int, method: str, kind: str = "both") -> float:
        return stability(_select_kind(s, kind) for s in self.selections[(spec_id, method)])

    def jaccard(self, spec_id: int, method_a: str, method_b: str, kind: str = "both") -> float:
        a = self.selections[(spec_id, method_a)]
        b = self.selections[(spec_id, method_b)]
        return float(np.mean([jaccard(_select_kind(x, kind), _select_kind(y, kind))
                              for x, y in zip(a, b)]))


def _select_kind(sel, kind):
    mains, ints = sel
    if kind == "main":
        return {("m", j) for j in mains}
    if kind == "interactions":
        return {("i", pr) for pr in ints}
    return {("m", j) for j in mains} | {("i", pr) for pr in ints}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_row(r):
    return [_fmt(r[key]) for key in CSV_HEADER]


def rep_seed(spec: SimulationSpec, rep: int) -> int:
    return int(np.random.SeedSequence([spec.seed, rep, 1]).generate_state(1)[0])


def run_replicate(spec: SimulationSpec, rep: int, methods: Sequence[str], k: int = 10):
    train, test, truth = generate(spec, rep)
    out = []
    seed = rep_seed(spec, rep)
    for method in methods:
        model = METHODS[method](train, k, seed)
        row = evaluate(model, truth, train, test)
        out.append((method, row, (tuple(model.active_main), tuple(model.active_interactions)),
                    model))
    return out


def aggregate(rows: list[dict]) -> tuple[dict, dict]:
    """Mean and standard error (sample SD / sqrt(reps)) of every metric column."""
    mean, se = {}, {}
    reps = len(rows)
    for key in METRIC_KEYS:
        vals = np.array([float(r[key]) for r in rows])
        mean[key] = float(vals.mean())
        se[key] = float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")
    return mean, se


def run_grid(specs: Sequence[SimulationSpec], methods: Sequence[str] = DEFAULT_METHODS,
             k: int = 10, threads: int = 1, keep_models: bool = False) -> GridResult:
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    specs = list(specs)
    methods = list(methods)
    jobs = [(si, rep) for si, spec in enumerate(specs) for rep in range(spec.n_reps)]
    workers = threads if threads and threads > 0 else (os.cpu_count() or 1)

    def job(args):
        si, rep = args
        return si, rep, run_replicate(specs[si], rep, methods, k)

    if workers == 1:
        results = [job(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(job, jobs))
    res = GridResult(specs=specs, methods=methods)
    for si, rep, outs in sorted(results, key=lambda t: (t[0], t[1])):
        spec = specs[si]
        for method, metrics, sel, model in outs:
            row = {"spec_id": si, "structure": spec.structure, "n": spec.n, "p": spec.p,
                   "rho": spec.rho, "snr": spec.snr, "method": method, "rep": rep}
            row.update(metrics)
            if keep_models:
                row["model"] = model
            res.rows.append(row)
            res.selections.setdefault((si, method), []).append(sel)
    for si, spec in enumerate(specs):
        for method in methods:
            block = [r for r in res.rows if r["spec_id"] == si and r["method"] == method]
            mean, se = aggregate(block)
            base = {"spec_id": si, "structure": spec.structure, "n": spec.n, "p": spec.p,
                    "rho": spec.rho, "snr": spec.snr, "method": method}
            res.aggregates.append({**base, "rep": "mean", **mean})
            res.aggregates.append({**base, "rep": "se", **se})
    return res
