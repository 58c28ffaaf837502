"""Verification-bias adjustment by multiple imputation of unverified cases.

A logistic risk model on (age, log PSA) is fit to MRI-negative, fully
verified cases, then its intercept is recalibrated so the mean predicted
probability equals the assumed base probability of significant cancer on a
negative MRI (default 0.03). Each imputation draws one Bernoulli status per
unverified patient (applied to all of that patient's cases) and per-
imputation AUROCs are pooled with the usual multiple-imputation rules:
Q = mean estimate, U = mean DeLong variance, B = between-imputation
variance, T = B (1 + 1/m) + U, CI = Q +/- t_{m-1} sqrt(T).

The default is improper imputation (draws from the point-estimate
probabilities); ``proper=True`` additionally draws model coefficients from
the asymptotic normal of the fit, which requires a locally fitted model.
"""

from __future__ import annotations

import dataclasses
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit
from scipy.stats import t as t_dist

from .cohort import CaseRecord
from .metrics import auroc_delong

DEFAULT_BASE_PROBABILITY = 0.03
DEFAULT_IMPUTATIONS = 100


class SeparationError(RuntimeError):
    """Perfect or quasi-perfect separation: the MLE does not exist."""


@dataclass(frozen=True)
class RiskModel:
    """Recalibrated logistic model P(significant cancer | age, psa)."""

    intercept: float
    coef_age: float
    coef_logpsa: float
    base_probability: float = DEFAULT_BASE_PROBABILITY
    fit_info: dict | None = field(default=None, compare=False, repr=False)

    def linear_predictor(self, age, psa) -> np.ndarray:
        age = np.asarray(age, dtype=float)
        psa = np.asarray(psa, dtype=float)
        if np.any(psa <= 0):
            raise ValueError("psa must be positive")
        return self.intercept + self.coef_age * age + self.coef_logpsa * np.log(psa)

    def predict(self, age, psa) -> np.ndarray:
        return expit(self.linear_predictor(age, psa))

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "coef_age": self.coef_age,
            "coef_logpsa": self.coef_logpsa,
            "base_probability": self.base_probability,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, payload: dict) -> "RiskModel":
        return cls(
            intercept=float(payload["intercept"]),
            coef_age=float(payload["coef_age"]),
            coef_logpsa=float(payload["coef_logpsa"]),
            base_probability=float(payload.get("base_probability", DEFAULT_BASE_PROBABILITY)),
        )

    @classmethod
    def from_json(cls, path) -> "RiskModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def case_probability(model: RiskModel, age: float, psa: float) -> float:
    """Predicted probability of significant cancer for one case."""
    if not age > 0:
        raise ValueError(f"age must be positive, got {age}")
    if not psa > 0:
        raise ValueError(f"psa must be positive, got {psa}")
    return float(model.predict(age, psa))


def _irls_logistic(X: np.ndarray, y: np.ndarray, max_iter: int = 60, tol: float = 1e-10):
    """Newton/IRLS logistic MLE; raises SeparationError when it diverges."""
    beta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        eta = X @ beta
        mu = expit(eta)
        w = mu * (1.0 - mu)
        xtwx = X.T @ (X * w[:, None])
        grad = X.T @ (y - mu)
        try:
            step = np.linalg.solve(xtwx, grad)
        except np.linalg.LinAlgError:
            raise SeparationError("singular information matrix") from None
        beta = beta + step
        if np.abs(beta).max() > 1e3:
            raise SeparationError("diverging coefficients")
        if np.abs(step).max() < tol:
            cov = np.linalg.inv(xtwx)
            return beta, cov
    raise SeparationError("IRLS failed to converge")


def fit_risk_model(
    cases: Sequence[CaseRecord],
    base_probability: float = DEFAULT_BASE_PROBABILITY,
) -> RiskModel:
    """Fit the risk model on the MRI-negative subset of a verified cohort.

    The input cohort must be fully verified. Covariates are age and
    log(PSA), standardized internally for numerical stability; the fitted
    intercept is then shifted so the mean predicted probability over the fit
    subset equals ``base_probability``. On separation the model falls back
    to the intercept-only base-probability model with a warning.
    """
    if not 0.0 < base_probability < 1.0:
        raise ValueError("base_probability must lie in (0, 1)")
    if any(c.is_unverified for c in cases):
        raise ValueError("risk model must be fit on a fully verified cohort")
    fit_cases = [c for c in cases if c.historical_pirads <= 2]
    if not fit_cases:
        raise ValueError("no MRI-negative cases to fit on")
    y = np.asarray([c.verified_label for c in fit_cases], dtype=float)
    if y.sum() == 0:
        raise ValueError("no positive outcomes among MRI-negative cases")
    if y.sum() == y.size:
        raise ValueError("no negative outcomes among MRI-negative cases")

    age = np.asarray([c.age for c in fit_cases], dtype=float)
    logpsa = np.log(np.asarray([c.psa for c in fit_cases], dtype=float))
    means = np.array([age.mean(), logpsa.mean()])
    sds = np.array([age.std(ddof=0) or 1.0, logpsa.std(ddof=0) or 1.0])
    Z = np.column_stack([np.ones(y.size), (age - means[0]) / sds[0], (logpsa - means[1]) / sds[1]])

    fallback_intercept = math.log(base_probability / (1.0 - base_probability))
    try:
        beta_std, cov_std = _irls_logistic(Z, y)
    except SeparationError as exc:
        warnings.warn(
            f"risk model fit failed ({exc}); falling back to the base-probability-only model",
            stacklevel=2,
        )
        return RiskModel(
            intercept=fallback_intercept,
            coef_age=0.0,
            coef_logpsa=0.0,
            base_probability=base_probability,
            fit_info={"fallback": str(exc), "n_fit": int(y.size)},
        )

    # map standardized coefficients back to the (age, log psa) scale
    A = np.array(
        [
            [1.0, -means[0] / sds[0], -means[1] / sds[1]],
            [0.0, 1.0 / sds[0], 0.0],
            [0.0, 0.0, 1.0 / sds[1]],
        ]
    )
    beta = A @ beta_std
    cov = A @ cov_std @ A.T

    # recalibrate: shift the intercept so the mean fitted risk hits the anchor
    eta = beta[0] + beta[1] * age + beta[2] * logpsa

    def gap(offset: float) -> float:
        return float(expit(eta + offset).mean()) - base_probability

    offset = brentq(gap, -40.0, 40.0)

    return RiskModel(
        intercept=float(beta[0] + offset),
        coef_age=float(beta[1]),
        coef_logpsa=float(beta[2]),
        base_probability=base_probability,
        fit_info={
            "n_fit": int(y.size),
            "recalibration_offset": float(offset),
            "coef_se": np.sqrt(np.diag(cov)).tolist(),
            "cov": cov.tolist(),
            "fallback": None,
        },
    )


def impute_statuses(
    cases: Sequence[CaseRecord],
    model: RiskModel,
    imputations: int = DEFAULT_IMPUTATIONS,
    seed: int = 0,
    proper: bool = False,
) -> np.ndarray:
    """(imputations, n_cases) matrix of 0/1 labels.

    Verified cases keep their labels in every imputation. Each unverified
    patient gets one Bernoulli draw per imputation, applied to all of that
    patient's cases; imputation j draws from the stream derived from
    (seed, j). Proper imputation additionally perturbs the model
    coefficients per imputation.
    """
    if imputations < 1:
        raise ValueError("imputations must be >= 1")
    if proper and not (model.fit_info and model.fit_info.get("cov")):
        raise ValueError("proper imputation requires a locally fitted model (no covariance)")
    n = len(cases)
    base = np.asarray(
        [c.verified_label if c.verified_label is not None else 0 for c in cases], dtype=np.int8
    )
    unverified = [i for i, c in enumerate(cases) if c.is_unverified]
    out = np.tile(base, (imputations, 1))
    if not unverified:
        return out

    # one probability per patient, from the first unverified case in input order
    patient_order: list[str] = []
    patient_cov: dict[str, tuple[float, float]] = {}
    case_to_patient: list[int] = []
    for i in unverified:
        pid = cases[i].patient_id
        if pid not in patient_cov:
            patient_cov[pid] = (cases[i].age, cases[i].psa)
            patient_order.append(pid)
        case_to_patient.append(patient_order.index(pid))
    ages = np.asarray([patient_cov[p][0] for p in patient_order], dtype=float)
    psas = np.asarray([patient_cov[p][1] for p in patient_order], dtype=float)
    probs = model.predict(ages, psas)
    case_to_patient_arr = np.asarray(case_to_patient, dtype=int)
    unverified_arr = np.asarray(unverified, dtype=int)

    if proper:
        mean = np.array([model.intercept, model.coef_age, model.coef_logpsa])
        cov = np.asarray(model.fit_info["cov"], dtype=float)

    for j in range(imputations):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(j,)))
        p = probs
        if proper:
            draw = rng.multivariate_normal(mean, cov, method="cholesky")
            p = expit(draw[0] + draw[1] * ages + draw[2] * np.log(psas))
        statuses = (rng.random(len(patient_order)) < p).astype(np.int8)
        out[j, unverified_arr] = statuses[case_to_patient_arr]
    return out


@dataclass(frozen=True)
class MiPooledAuroc:
    """Pooled AUROC across imputations."""

    estimate: float  # Q: mean per-imputation AUROC
    within_variance: float  # U: mean DeLong variance
    between_variance: float  # B: variance of the per-imputation AUROCs
    total_variance: float  # T = B (1 + 1/m) + U
    imputations: int
    ci_low: float
    ci_high: float
    excluded_imputations: int = 0
    n_unverified: int | None = None

    def __post_init__(self):
        eps = 1e-15
        if self.total_variance + eps < self.within_variance:
            raise ValueError("total variance below within-imputation variance")
        scale = self.between_variance * (1.0 + 1.0 / self.imputations)
        if self.total_variance + eps < scale:
            raise ValueError("total variance below scaled between-imputation variance")

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "within_variance": self.within_variance,
            "between_variance": self.between_variance,
            "total_variance": self.total_variance,
            "imputations": self.imputations,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "excluded_imputations": self.excluded_imputations,
            "n_unverified": self.n_unverified,
        }


def pool_estimates(estimates: Sequence[float], variances: Sequence[float]) -> MiPooledAuroc:
    """Multiple-imputation pooling of per-imputation estimates/variances."""
    q = np.asarray(estimates, dtype=float)
    u = np.asarray(variances, dtype=float)
    if q.shape != u.shape:
        raise ValueError("estimates and variances must align")
    m = q.size
    if m < 2:
        raise ValueError("pooling needs at least 2 imputations")
    if np.any(u < 0):
        raise ValueError("variances must be non-negative")
    q_bar = float(q.mean())
    b = float(np.var(q, ddof=1))
    u_bar = float(u.mean())
    t_var = b * (1.0 + 1.0 / m) + u_bar
    half = float(t_dist.ppf(0.975, m - 1)) * math.sqrt(t_var)
    return MiPooledAuroc(
        estimate=q_bar,
        within_variance=u_bar,
        between_variance=b,
        total_variance=t_var,
        imputations=m,
        ci_low=q_bar - half,
        ci_high=q_bar + half,
    )


def pooled_auroc_mi(
    cases: Sequence[CaseRecord],
    scores: Sequence[float],
    model: RiskModel | None = None,
    imputations: int = DEFAULT_IMPUTATIONS,
    seed: int = 0,
    proper: bool = False,
) -> MiPooledAuroc:
    """AUROC with unverified cases multiply imputed and pooled.

    With zero unverified cases the pooled estimate equals the complete-case
    AUROC exactly (B = 0, T = U). Imputations that come out single-class are
    excluded with a warning.
    """
    s = np.asarray(scores, dtype=float)
    if len(cases) != s.size:
        raise ValueError("cases and scores must align")
    if imputations < 2:
        raise ValueError("pooled analysis needs at least 2 imputations")
    n_unverified = sum(1 for c in cases if c.is_unverified)

    if n_unverified == 0:
        # degenerate pooling: plain DeLong analysis, normal-theory interval
        labels = np.asarray([c.verified_label for c in cases], dtype=int)
        auc, var = auroc_delong(labels, s)
        half = 1.96 * math.sqrt(var)
        return MiPooledAuroc(
            estimate=auc,
            within_variance=var,
            between_variance=0.0,
            total_variance=var,
            imputations=imputations,
            ci_low=max(0.0, auc - half),
            ci_high=min(1.0, auc + half),
            n_unverified=0,
        )

    if model is None:
        raise ValueError("unverified cases present: a risk model is required")
    matrix = impute_statuses(cases, model, imputations, seed, proper)
    estimates: list[float] = []
    variances: list[float] = []
    skipped = 0
    for row in matrix:
        if row.min() == row.max():
            skipped += 1
            continue
        auc, var = auroc_delong(row, s)
        estimates.append(auc)
        variances.append(var)
    if skipped:
        warnings.warn(f"excluded {skipped} single-class imputations", stacklevel=2)
    if len(estimates) < 2:
        raise ValueError("fewer than 2 usable imputations (single-class draws)")
    pooled = pool_estimates(estimates, variances)
    return dataclasses.replace(
        pooled,
        ci_low=max(0.0, pooled.ci_low),
        ci_high=min(1.0, pooled.ci_high),
        excluded_imputations=skipped,
        n_unverified=n_unverified,
    )
