"""End-to-end fits: uniPairs and uniPairs-2stage.

Both procedures work on internally standardized columns and report the
final model on the original feature scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Dataset, DimensionMismatch, StandardizedDesign, standardize
from .glm import get_family, glm_triplet_scan
from .solver import LassoProblem, cross_validate, fit_at_best
from .tripletscan import HierarchyMode, ScanResult, eligible_pairs, scan
from .unilasso import unilasso_fit

SCHEMA = "unipairs/1"
METHODS = ("unipairs", "unipairs-2stage")


@dataclass(frozen=True)
class InteractionModel:
    """Fitted model with coefficients on the original feature scale.

    ``main`` is a length-p coefficient vector; ``interactions`` maps
    ``(j, k)`` with ``j < k`` to nonzero coefficients. The standardized
    fields are kept for diagnostics and may be absent on models loaded
    from JSON.
    """

    method: str
    family: str
    hierarchy: str
    beta0: float
    main: np.ndarray
    interactions: dict
    mu: np.ndarray
    sigma: np.ndarray
    feature_names: tuple
    seed: Optional[int] = None
    scan_summary: dict = field(default_factory=dict)
    gamma_hat: tuple = ()
    beta0_s: Optional[float] = None
    beta_s: Optional[np.ndarray] = None
    gamma_s: Optional[dict] = None
    info: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict, repr=False)

    @property
    def p(self) -> int:
        return self.main.shape[0]

    @property
    def active_main(self) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.main)]

    @property
    def active_interactions(self) -> list[tuple[int, int]]:
        return sorted(pair for pair, c in self.interactions.items() if c != 0)


def back_transform(beta0_s: float, beta_s: np.ndarray, gamma_s: dict, mu: np.ndarray,
                   sigma: np.ndarray):
    """Rewrite a standardized-scale model in the original coordinates.

    Interactions contribute to both main effects through the column means,
    so a selected pair induces nonzero parent coefficients unless the
    parents are exactly centered.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    beta_s = np.asarray(beta_s, dtype=np.float64)
    p = mu.shape[0]
    if beta_s.shape != (p,):
        raise DimensionMismatch("beta_s must have one entry per feature")
    nz = beta_s != 0
    if np.any(sigma[nz] <= 0):
        raise ValueError("nonzero coefficient on a column with zero scale")
    beta = np.zeros(p)
    beta[nz] = beta_s[nz] / sigma[nz]
    beta0 = float(beta0_s) - float(np.sum(beta_s[nz] * mu[nz] / sigma[nz]))
    gamma = {}
    for (j, k), g in sorted(gamma_s.items()):
        if g == 0:
            continue
        if sigma[j] <= 0 or sigma[k] <= 0:
            raise ValueError("interaction on a column with zero scale")
        gamma[(j, k)] = g / (sigma[j] * sigma[k])
        beta[j] -= g * mu[k] / (sigma[j] * sigma[k])
        beta[k] -= g * mu[j] / (sigma[j] * sigma[k])
        beta0 += g * mu[j] * mu[k] / (sigma[j] * sigma[k])
    return beta0, beta, gamma


def _check_columns(model: InteractionModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.p:
        raise DimensionMismatch(f"model expects {model.p} columns, got shape {X.shape}")
    return X


def predict(model: InteractionModel, X) -> np.ndarray:
    """Linear predictor on the original scale."""
    X = _check_columns(model, X)
    out = model.beta0 + X @ model.main
    for (j, k), g in model.interactions.items():
        out = out + g * X[:, j] * X[:, k]
    return out


def predict_standardized(model: InteractionModel, X) -> np.ndarray:
    """Same predictor evaluated through the standardized coefficients."""
    X = _check_columns(model, X)
    if model.beta_s is None:
        raise ValueError("model carries no standardized coefficients")
    kept = np.flatnonzero(model.sigma > 0)
    Xs = np.zeros_like(X)
    Xs[:, kept] = (X[:, kept] - model.mu[kept]) / model.sigma[kept]
    out = model.beta0_s + Xs @ model.beta_s
    for (j, k), g in model.gamma_s.items():
        out = out + g * Xs[:, j] * Xs[:, k]
    return out


def predict_response(model: InteractionModel, X) -> np.ndarray:
    """Mean response: identity for gaussian, probability for binomial, risk for cox."""
    return get_family(model.family).mean(predict(model, X))


def _products(design: StandardizedDesign, pairs) -> np.ndarray:
    pairs = list(pairs)
    if not pairs:
        return np.zeros((design.n, 0))
    jj = design.position[[a for a, _ in pairs]]
    kk = design.position[[b for _, b in pairs]]
    return design.Xs[:, jj] * design.Xs[:, kk]


def _run_scan(design, resp, fam, pairs, threads) -> ScanResult:
    if fam.name == "gaussian":
        return scan(design, resp, pairs, threads=threads)
    return glm_triplet_scan(design, resp, fam, pairs, threads=threads)


def _streams(seed):
    """Independent seed streams: stage-1 folds, stage-2 folds, simulation noise."""
    return np.random.SeedSequence(seed).spawn(3)


def _prepare(data: Dataset, family):
    fam = get_family(family)
    if data.n < 5:
        raise ValueError(f"need at least 5 observations, got {data.n}")
    design = standardize(data)
    resp = fam.response(data)
    return fam, design, resp


def _scan_summary(sc: ScanResult) -> dict:
    return {"n_pairs_scanned": sc.n_pairs, "n_selected": int(sc.selected.sum()),
            "r_hat": int(sc.r_hat)}


def fit_unipairs(data: Dataset, k: int = 10, seed: int = 42, family="gaussian",
                 threads: int = 0, n_lambda: int = 100, ratio: float = 1e-3,
                 rule: str = "min") -> InteractionModel:
    """Screen all pairs, then run UniLasso on main effects plus screened products."""
    fam, design, resp = _prepare(data, family)
    pairs = eligible_pairs(design.p, HierarchyMode.NONE, [], features=design.kept)
    sc = _run_scan(design, resp, fam, pairs, threads)
    gamma_hat = sc.gamma_hat
    q = design.kept.size
    columns = np.hstack([design.Xs, _products(design, gamma_hat)])
    s1, _, _ = _streams(seed)
    ul = unilasso_fit(columns, resp, k=k, seed=s1, family=fam, n_lambda=n_lambda,
                      ratio=ratio, rule=rule)
    beta_s = np.zeros(design.p)
    beta_s[design.kept] = ul.beta_s[:q]
    gamma_s = {pair: float(c) for pair, c in zip(gamma_hat, ul.beta_s[q:]) if c != 0}
    beta0, beta, gamma = back_transform(ul.beta0_s, beta_s, gamma_s, design.mu, design.sigma)
    info = {"lambda": ul.cv.lambda_best, "cv_error": ul.cv.cv_best,
            "n_candidates": int(columns.shape[1])}
    return InteractionModel(
        method="unipairs", family=fam.name, hierarchy=HierarchyMode.NONE.value,
        beta0=beta0, main=beta, interactions=gamma, mu=design.mu, sigma=design.sigma,
        feature_names=tuple(data.feature_names), seed=seed,
        scan_summary=_scan_summary(sc), gamma_hat=tuple(gamma_hat),
        beta0_s=float(ul.beta0_s), beta_s=beta_s, gamma_s=gamma_s, info=info,
        stages={"unilasso": ul, "scan": sc})


def fit_unipairs_2stage(data: Dataset, hierarchy: HierarchyMode | str = "none", k: int = 10,
                        seed: int = 42, family="gaussian", threads: int = 0,
                        n_lambda: int = 100, ratio: float = 1e-3,
                        rule: str = "min") -> InteractionModel:
    """Main effects by UniLasso, then a lasso on screened products fit to the
    prevalidated residual; the final model is the sum of both stages."""
    hierarchy = HierarchyMode(hierarchy)
    fam, design, resp = _prepare(data, family)
    s1, s2, _ = _streams(seed)
    stage1 = unilasso_fit(design.Xs, resp, k=k, seed=s1, family=fam, n_lambda=n_lambda,
                          ratio=ratio, rule=rule)
    active1 = design.kept[stage1.active]
    pairs = eligible_pairs(design.p, hierarchy, active1, features=design.kept)
    beta_s = np.zeros(design.p)
    beta_s[design.kept] = stage1.beta_s
    alpha0 = 0.0
    gamma_s: dict = {}
    info = {"lambda": stage1.cv.lambda_best, "cv_error": stage1.cv.cv_best,
            "stage1_active": [int(j) for j in active1]}
    sc = None
    gamma_hat: list = []
    stage2 = None
    if len(pairs):
        sc = _run_scan(design, resp, fam, pairs, threads)
        gamma_hat = sc.gamma_hat
        Z = _products(design, gamma_hat)
        pv = stage1.cv.prevalidated
        if fam.name == "gaussian":
            problem = LassoProblem(Z, resp - pv, intercept=True)
        else:
            # likelihood families: stage 1 enters as a fixed offset on the link scale
            problem = LassoProblem(Z, resp, intercept=fam.has_intercept, offset=pv)
        cv2 = cross_validate(problem, k=k, seed=s2, n_lambda=n_lambda, ratio=ratio,
                             family=fam, rule=rule)
        stage2 = fit_at_best(problem, cv2, fam)
        alpha0 = float(stage2.intercept)
        gamma_s = {pair: float(c) for pair, c in zip(gamma_hat, stage2.coefs) if c != 0}
        info.update({"lambda_interactions": cv2.lambda_best,
                     "cv_error_interactions": cv2.cv_best})
    beta0, beta, gamma = back_transform(stage1.beta0_s + alpha0, beta_s, gamma_s,
                                        design.mu, design.sigma)
    summary = (_scan_summary(sc) if sc is not None
               else {"n_pairs_scanned": 0, "n_selected": 0, "r_hat": 0})
    return InteractionModel(
        method="unipairs-2stage", family=fam.name, hierarchy=hierarchy.value,
        beta0=beta0, main=beta, interactions=gamma, mu=design.mu, sigma=design.sigma,
        feature_names=tuple(data.feature_names), seed=seed, scan_summary=summary,
        gamma_hat=tuple(gamma_hat), beta0_s=float(stage1.beta0_s + alpha0), beta_s=beta_s,
        gamma_s=gamma_s, info=info,
        stages={"unilasso": stage1, "scan": sc, "stage2": stage2, "alpha0": alpha0})


def fit(data: Dataset, method: str = "unipairs-2stage", **kwargs) -> InteractionModel:
    if method == "unipairs":
        kwargs.pop("hierarchy", None)
        return fit_unipairs(data, **kwargs)
    if method == "unipairs-2stage":
        return fit_unipairs_2stage(data, **kwargs)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def model_to_dict(model: InteractionModel) -> dict:
    names = model.feature_names
    return {
        "schema": SCHEMA,
        "method": model.method,
        "family": model.family,
        "hierarchy": model.hierarchy,
        "n_features": model.p,
        "feature_names": list(names),
        "intercept": float(model.beta0),
        "main": [{"index": j, "name": names[j], "coef": float(model.main[j])}
                 for j in model.active_main],
        "interactions": [{"i": int(j), "j": int(k), "coef": float(c)}
                         for (j, k), c in sorted(model.interactions.items())],
        "scan": {key: int(model.scan_summary.get(key, 0))
                 for key in ("n_pairs_scanned", "n_selected", "r_hat")},
        "scale": {"mu": [float(v) for v in model.mu], "sigma": [float(v) for v in model.sigma]},
        "seed": model.seed,
        "fit": {key: (float(v) if isinstance(v, (float, np.floating)) else v)
                for key, v in model.info.items()},
    }


def model_to_json(model: InteractionModel) -> str:
    return json.dumps(model_to_dict(model), indent=2)


def model_from_dict(d: dict) -> InteractionModel:
    if d.get("schema") != SCHEMA:
        raise ValueError(f"unsupported model schema {d.get('schema')!r}")
    p = int(d["n_features"])
    main = np.zeros(p)
    for entry in d["main"]:
        main[int(entry["index"])] = float(entry["coef"])
    inter = {(int(e["i"]), int(e["j"])): float(e["coef"]) for e in d["interactions"]}
    return InteractionModel(
        method=d["method"], family=d.get("family", "gaussian"), hierarchy=d["hierarchy"],
        beta0=float(d["intercept"]), main=main, interactions=inter,
        mu=np.asarray(d["scale"]["mu"], dtype=np.float64),
        sigma=np.asarray(d["scale"]["sigma"], dtype=np.float64),
        feature_names=tuple(d.get("feature_names") or [f"x{j}" for j in range(p)]),
        seed=d.get("seed"), scan_summary=dict(d.get("scan", {})), info=dict(d.get("fit", {})))


def model_from_json(text: str) -> InteractionModel:
    return model_from_dict(json.loads(text))
