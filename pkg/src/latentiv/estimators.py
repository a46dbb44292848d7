"""Causal effect estimators: Wald ratio, TSLS, cross-fitted orthogonal IV,
and the end-to-end pipeline that trains the VAE and feeds the learned
instrument into a downstream estimator."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import SpecError, WeakInstrumentError
from .model import VaeConfig, encode, extract_iv, train
from .scm import Dataset

__all__ = ["EstimationReport", "wald_ratio", "tsls", "ortho_iv",
           "estimate_effect", "NUISANCE_REGISTRY"]


@dataclass
class EstimationReport:
    method: str
    beta_hat: float
    nuisance: str = None
    folds: int = None
    seed: int = None
    bias_percent: float = None
    first_stage_strength: float = None
    pcc_profile: list = None
    runtime_seconds: float = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _cov(a: np.ndarray, b: np.ndarray) -> float:
    # unbiased sample covariance
    return float(np.dot(a - a.mean(), b - b.mean()) / (len(a) - 1))


def _check_strength(z: np.ndarray, w: np.ndarray) -> float:
    czw = _cov(z, w)
    scale = np.sqrt(max(_cov(z, z) * _cov(w, w), 0.0))
    if abs(czw) < 1e-10 * max(scale, 1e-300):
        raise WeakInstrumentError("instrument is uncorrelated with treatment")
    return abs(czw) / scale if scale > 0 else 0.0


def wald_ratio(z, w, y) -> float:
    """Cov(z, y) / Cov(z, w)."""
    z, w, y = (np.asarray(v, dtype=np.float64).ravel() for v in (z, w, y))
    if len(z) < 3:
        raise SpecError("wald_ratio needs at least 3 observations")
    _check_strength(z, w)
    return _cov(z, y) / _cov(z, w)


def _ols(design: np.ndarray, target: np.ndarray) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    return coef


def tsls(z, w, y, covariates=None, seed: int = None) -> EstimationReport:
    """Two-stage least squares with z instrumenting w."""
    start = time.perf_counter()
    z, w, y = (np.asarray(v, dtype=np.float64).ravel() for v in (z, w, y))
    strength = _check_strength(z, w)
    n = len(z)
    ones = np.ones((n, 1))
    extra = (np.asarray(covariates, dtype=np.float64)
             if covariates is not None else np.empty((n, 0)))
    if extra.ndim == 1:
        extra = extra[:, None]

    stage1 = np.column_stack([ones, z[:, None], extra])
    coef1 = _ols(stage1, w)
    w_hat = stage1 @ coef1
    rss = float(np.sum((w - w_hat) ** 2))
    restricted = np.column_stack([ones, extra])
    w_hat_r = restricted @ _ols(restricted, w)
    rss_r = float(np.sum((w - w_hat_r) ** 2))
    df = n - stage1.shape[1]
    f_stat = (rss_r - rss) / max(rss / max(df, 1), 1e-300)
    if f_stat < 1e-6:
        raise WeakInstrumentError(f"first-stage F = {f_stat:.3g}")

    stage2 = np.column_stack([ones, w_hat[:, None], extra])
    coef2 = _ols(stage2, y)
    return EstimationReport(method="tsls", beta_hat=float(coef2[1]),
                            seed=seed,
                            first_stage_strength=strength,
                            runtime_seconds=time.perf_counter() - start,
                            extras={"first_stage_f": f_stat})


def _ridge_nuisance(x_train, t_train, x_test, penalty: float = 1e-3):
    """Ridge-regularized linear predictor (intercept unpenalized)."""
    n, d = x_train.shape
    design = np.column_stack([np.ones(n), x_train])
    gram = design.T @ design + penalty * np.diag([0.0] + [1.0] * d)
    coef = np.linalg.solve(gram, design.T @ t_train)
    return np.column_stack([np.ones(len(x_test)), x_test]) @ coef


def _mean_nuisance(x_train, t_train, x_test, **_):
    return np.full(len(x_test), t_train.mean())


NUISANCE_REGISTRY = {
    "ridge": _ridge_nuisance,
    "mean": _mean_nuisance,
}


def ortho_iv(z, w, y, x, folds: int = 2, nuisance: str = "ridge",
             seed: int = None, fold_assignment=None) -> EstimationReport:
    """Cross-fitted orthogonal IV for a constant treatment effect.

    Residualizes y, w and z on x with nuisances fit on held-out folds, then
    solves E[(y_res - beta * w_res) * z_res] = 0.
    """
    start = time.perf_counter()
    z, w, y = (np.asarray(v, dtype=np.float64).ravel() for v in (z, w, y))
    n = len(z)
    if folds < 2:
        raise SpecError("ortho_iv requires folds >= 2")
    if folds > n:
        raise SpecError("more folds than observations")
    if nuisance not in NUISANCE_REGISTRY:
        raise SpecError(f"unknown nuisance regressor {nuisance!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    fit = NUISANCE_REGISTRY[nuisance]

    if fold_assignment is not None:
        fold_of = np.asarray(fold_assignment)
        if fold_of.shape != (n,) or len(np.unique(fold_of)) != folds:
            raise SpecError("fold_assignment must label each row with one of "
                            "`folds` distinct fold ids")
        fold_of = np.unique(fold_of, return_inverse=True)[1]
    else:
        fold_of = np.arange(n) % folds  # deterministic partition
    y_res = np.empty(n)
    w_res = np.empty(n)
    z_res = np.empty(n)
    for k in range(folds):
        held = fold_of == k
        rest = ~held
        y_res[held] = y[held] - fit(x[rest], y[rest], x[held])
        w_res[held] = w[held] - fit(x[rest], w[rest], x[held])
        z_res[held] = z[held] - fit(x[rest], z[rest], x[held])

    denom = float(np.dot(w_res, z_res))
    scale = np.sqrt(float(np.dot(w_res, w_res) * np.dot(z_res, z_res)))
    if abs(denom) < 1e-10 * max(scale, 1e-300):
        raise WeakInstrumentError("residualized instrument is uncorrelated "
                                  "with residualized treatment")
    beta = float(np.dot(y_res, z_res)) / denom
    return EstimationReport(method="ortho_iv", beta_hat=beta,
                            nuisance=nuisance, folds=folds, seed=seed,
                            first_stage_strength=_check_strength(z, w),
                            runtime_seconds=time.perf_counter() - start)


def estimate_effect(dataset: Dataset, cfg: VaeConfig,
                    estimator: str = "ortho_iv",
                    conditioning: str = "c",
                    folds: int = 2, nuisance: str = "ridge") -> EstimationReport:
    """Train the VAE, extract the learned instrument, estimate the effect.

    `conditioning` selects the covariate set residualized out by ortho_iv /
    used as TSLS controls: "x" (observed covariates), "c" (posterior-mean
    confounder block) or "none".
    """
    if estimator not in ("wald", "tsls", "ortho_iv"):
        raise SpecError(f"unknown estimator {estimator!r}")
    if conditioning not in ("x", "c", "none"):
        raise SpecError(f"unknown conditioning set {conditioning!r}")
    start = time.perf_counter()
    params = train(dataset, cfg)
    z_hat = extract_iv(params, dataset)
    z_col = z_hat[:, 0] if z_hat.shape[1] == 1 else z_hat.mean(axis=1)
    _, mu_c = encode(params, dataset.x)

    if conditioning == "x":
        cond = dataset.x
    elif conditioning == "c":
        cond = mu_c
    else:
        cond = None

    if estimator == "wald":
        report = EstimationReport(method="wald",
                                  beta_hat=wald_ratio(z_col, dataset.w, dataset.y),
                                  first_stage_strength=_check_strength(z_col, dataset.w))
    elif estimator == "tsls":
        report = tsls(z_col, dataset.w, dataset.y, covariates=cond)
    else:
        if cond is None:
            report = ortho_iv(z_col, dataset.w, dataset.y,
                              np.zeros((dataset.n, 1)), folds=folds,
                              nuisance="mean")
        else:
            report = ortho_iv(z_col, dataset.w, dataset.y, cond,
                              folds=folds, nuisance=nuisance)

    report.method = f"divvae+{report.method}"
    report.seed = cfg.seed
    if dataset.beta_true is not None:
        report.bias_percent = abs(
            (report.beta_hat - dataset.beta_true) / dataset.beta_true) * 100.0
    pcc = np.array([_pcc(z_col, mu_c[:, j]) for j in range(mu_c.shape[1])])
    report.pcc_profile = pcc.tolist()
    report.extras["mean_abs_pcc"] = float(np.mean(np.abs(pcc)))
    report.extras["final_epoch_loss"] = params.loss_trace[-1]
    report.runtime_seconds = time.perf_counter() - start
    return report


def _pcc(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    return float(np.dot(a, b) / np.sqrt(np.dot(a, a) * np.dot(b, b)))
