"""Marginal interaction screening over feature pairs.

For every eligible pair (j, k) the response is regressed on
``(1, x_j, x_k, x_j * x_k)`` and the interaction coefficient is tested with
a two-sided t-test. The surviving set is cut at the largest gap between
consecutive sorted log p-values.

Work is split into one task per leading index j; tasks never depend on how
many workers execute them, so results are bitwise identical for any thread
count.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional

import numpy as np

from .core import StandardizedDesign, sweep_solve, t_two_sided_p

P_FLOOR = 1e-20


class HierarchyMode(str, enum.Enum):
    STRONG = "strong"
    WEAK = "weak"
    NONE = "none"


@dataclass(frozen=True)
class PairStat:
    j: int
    k: int
    beta_jk: float
    p_value: float
    degenerate: bool


@dataclass(frozen=True)
class ScanResult:
    """Columnar table of pair statistics with the log-gap selection.

    ``r_hat`` counts the order statistics at or below the cut (1-based);
    ``selected`` is a boolean mask aligned with the pair arrays.
    """

    j: np.ndarray
    k: np.ndarray
    beta: np.ndarray
    p_value: np.ndarray
    degenerate: np.ndarray
    selected: np.ndarray
    r_hat: int
    log_gaps: np.ndarray

    @property
    def n_pairs(self) -> int:
        return int(self.j.size)

    @property
    def gamma_hat(self) -> list[tuple[int, int]]:
        idx = np.flatnonzero(self.selected)
        return [(int(self.j[i]), int(self.k[i])) for i in idx]

    @property
    def stats(self) -> list[PairStat]:
        return list(self.iter_stats())

    def iter_stats(self) -> Iterator[PairStat]:
        for i in range(self.n_pairs):
            yield PairStat(int(self.j[i]), int(self.k[i]), float(self.beta[i]),
                           float(self.p_value[i]), bool(self.degenerate[i]))


def eligible_pairs(p: int, mode: HierarchyMode | str, active_main: Iterable[int],
                   features: Optional[Iterable[int]] = None) -> np.ndarray:
    """Candidate pairs (j < k) allowed by the hierarchy rule.

    ``features`` restricts the universe (e.g. to non-constant columns).
    Returns an (M, 2) integer array in lexicographic order.
    """
    mode = HierarchyMode(mode)
    universe = np.arange(p) if features is None else np.unique(np.asarray(list(features), dtype=np.intp))
    active = np.zeros(p, dtype=bool)
    act = np.asarray(list(active_main), dtype=np.intp)
    if act.size and (act.min() < 0 or act.max() >= p):
        raise ValueError("active_main indices out of range")
    active[act] = True
    if not active[universe].any():
        mode = HierarchyMode.NONE
    jj, kk = np.triu_indices(universe.size, k=1)
    pairs = np.column_stack([universe[jj], universe[kk]]).astype(np.intp)
    if mode is HierarchyMode.STRONG:
        keep = active[pairs[:, 0]] & active[pairs[:, 1]]
    elif mode is HierarchyMode.WEAK:
        keep = active[pairs[:, 0]] | active[pairs[:, 1]]
    else:
        keep = np.ones(len(pairs), dtype=bool)
    return pairs[keep].reshape(-1, 2)


def _n_workers(threads: int) -> int:
    return threads if threads and threads > 0 else (os.cpu_count() or 1)


def group_by_first(pairs: np.ndarray) -> list[tuple[int, np.ndarray]]:
    """Split a lexicographically sorted pair array into (j, ks) tasks."""
    if len(pairs) == 0:
        return []
    starts = np.flatnonzero(np.r_[True, pairs[1:, 0] != pairs[:-1, 0]])
    bounds = np.r_[starts, len(pairs)]
    return [(int(pairs[a, 0]), pairs[a:b, 1]) for a, b in zip(bounds[:-1], bounds[1:])]


def run_pair_tasks(pairs: np.ndarray, task: Callable, threads: int = 0):
    """Evaluate ``task(j, ks)`` for every leading index and concatenate in order.

    ``task`` returns a tuple of 1-D arrays aligned with ``ks``.
    """
    pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs = pairs[order]
    groups = group_by_first(pairs)
    workers = _n_workers(threads)
    if workers == 1 or len(groups) <= 1:
        parts = [task(j, ks) for j, ks in groups]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda g: task(*g), groups))
    if not parts:
        return pairs, None
    cols = tuple(np.concatenate(c) for c in zip(*parts))
    return pairs, cols


def _triplet_block(xj: np.ndarray, XK: np.ndarray, y: np.ndarray):
    """OLS of y on (1, xj, xk, xj*xk) for every column xk of XK."""
    n, m = XK.shape
    Z = xj[:, None] * XK
    G = np.empty((m, 4, 4))
    G[:, 0, 0] = n
    G[:, 0, 1] = G[:, 1, 0] = xj.sum()
    G[:, 0, 2] = G[:, 2, 0] = XK.sum(axis=0)
    G[:, 0, 3] = G[:, 3, 0] = Z.sum(axis=0)
    G[:, 1, 1] = xj @ xj
    G[:, 1, 2] = G[:, 2, 1] = xj @ XK
    G[:, 1, 3] = G[:, 3, 1] = xj @ Z
    G[:, 2, 2] = (XK * XK).sum(axis=0)
    G[:, 2, 3] = G[:, 3, 2] = (XK * Z).sum(axis=0)
    G[:, 3, 3] = (Z * Z).sum(axis=0)
    b = np.empty((m, 4))
    b[:, 0] = y.sum()
    b[:, 1] = xj @ y
    b[:, 2] = y @ XK
    b[:, 3] = y @ Z
    coef, inv_diag, dep = sweep_solve(G, b)
    resid = (y[:, None] - coef[:, 0] - coef[:, 1] * xj[:, None]
             - coef[:, 2] * XK - coef[:, 3] * Z)
    rss = (resid * resid).sum(axis=0)
    return coef, inv_diag, dep, rss


def triplet_pvalues(coef: np.ndarray, inv_diag: np.ndarray, dep: np.ndarray,
                    rss: np.ndarray, y: np.ndarray):
    """Interaction t-test p-values with the zero-residual conventions applied."""
    n = y.shape[0]
    df = n - 4
    yc = y - y.mean()
    tss = float(yc @ yc)
    ysd = np.sqrt(tss / max(n - 1, 1))
    beta = coef[:, 3]
    degenerate = dep.any(axis=1)
    exact = rss <= 1e-20 * max(tss, np.finfo(float).tiny)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.sqrt(rss / df * inv_diag[:, 3])
        t = np.where(exact, np.inf, beta / se)
    p = np.asarray(t_two_sided_p(np.where(np.isfinite(t) | np.isinf(t), t, 0.0), df))
    # noiseless fits: p = 0 for a genuinely nonzero coefficient, else no information
    null_beta = np.abs(beta) <= 1e-10 * max(1.0, ysd)
    degenerate = degenerate | (exact & null_beta) | ~np.isfinite(beta)
    p = np.where(degenerate, 1.0, p)
    beta = np.where(np.isfinite(beta), beta, 0.0)
    return beta, p, degenerate


def scan(design: StandardizedDesign, y: np.ndarray, pairs, threads: int = 0) -> ScanResult:
    """Fit the local interaction regression for each pair and apply the log-gap cut.

    ``pairs`` uses original column indices; both columns must be retained
    by ``design``. Only per-pair scalars are kept.
    """
    y = np.asarray(y, dtype=np.float64)
    n = design.n
    if n < 5:
        raise ValueError(f"triplet scan needs n >= 5 (df = n - 4), got n = {n}")
    pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
    if np.any(pairs[:, 0] >= pairs[:, 1]):
        raise ValueError("pairs must satisfy j < k")

    def task(j, ks):
        coef, inv_diag, dep, rss = _triplet_block(design.column(j), design.columns(ks), y)
        return triplet_pvalues(coef, inv_diag, dep, rss, y)

    pairs, cols = run_pair_tasks(pairs, task, threads)
    if cols is None:
        empty = np.zeros(0)
        return ScanResult(np.zeros(0, np.intp), np.zeros(0, np.intp), empty, empty,
                          np.zeros(0, bool), np.zeros(0, bool), 0, empty)
    beta, p, degenerate = cols
    return make_scan_result(pairs, beta, p, degenerate)


def make_scan_result(pairs, beta, p, degenerate) -> ScanResult:
    r_hat, selected, gaps = log_gap_select(p)
    return ScanResult(j=pairs[:, 0].copy(), k=pairs[:, 1].copy(), beta=beta,
                      p_value=p, degenerate=degenerate, selected=selected,
                      r_hat=r_hat, log_gaps=gaps)


def log_gap_select(p_values) -> tuple[int, np.ndarray, np.ndarray]:
    """Largest log-gap threshold.

    Returns ``(r_hat, selected_mask, log_gaps)``. ``r_hat`` is 1-based and
    ties in the gap maximum resolve to the smallest r; every p-value at or
    below the r_hat-th order statistic is selected.
    """
    p = np.asarray(p_values, dtype=np.float64)
    M = p.size
    if M == 0:
        return 0, np.zeros(0, dtype=bool), np.zeros(0)
    ps = np.sort(p, kind="stable")
    if M == 1:
        return 1, np.ones(1, dtype=bool), np.zeros(0)
    ell = np.log(np.maximum(ps, P_FLOOR))
    gaps = np.diff(ell)
    r_hat = int(np.argmax(gaps)) + 1
    selected = p <= ps[r_hat - 1]
    return r_hat, selected, gaps
