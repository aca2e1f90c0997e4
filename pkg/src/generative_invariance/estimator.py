"""Closed-form estimators for prediction under hidden confounding.

Fitting reduces to two symmetric linear systems built from the environment
mean matrix M and the design matrix X:

* ``beta_hat  = (M^T M)^{-1} M^T Y``
* ``k_opt_hat = (X^T X - M^T M)^{-1} X^T (Y - X beta_hat)``
* ``k_hat     = X^T (Y - X beta_hat) / N``

Rank deficiency of either system is an error, never silently regularized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._linalg import gated_solve, max_abs, quad_form_inv, rel_scale, sym
from .data import Dataset, EnvironmentSummary, centering_matrix, summarize
from .errors import (
    DegenerateCovariatesError,
    IdentifiabilityError,
    SingularCovarianceError,
)

DEFAULT_RANK_TOL = 1e-10
PD_TOL = 1e-12


@dataclass(frozen=True)
class RankReport:
    """Spectrum of ``sum_z n_z mu_hat_z mu_hat_z^T`` and the rank verdict.

    ``identifiable`` is true iff the smallest eigenvalue exceeds
    ``rank_tol`` times the largest.
    """

    eigenvalues: np.ndarray
    rank_tol: float
    numerical_rank: int = field(init=False)
    identifiable: bool = field(init=False)
    condition_number: float = field(init=False)

    def __post_init__(self):
        eig = np.sort(np.asarray(self.eigenvalues, dtype=float))[::-1]
        object.__setattr__(self, "eigenvalues", eig)
        lam_max = eig[0] if eig.size else 0.0
        if lam_max <= 0.0:
            rank = 0
            cond = float("inf")
        else:
            rank = int(np.sum(eig > self.rank_tol * lam_max))
            cond = float(lam_max / eig[-1]) if eig[-1] > 0 else float("inf")
        object.__setattr__(self, "numerical_rank", rank)
        object.__setattr__(self, "identifiable",
                           bool(eig.size > 0 and eig[-1] > self.rank_tol * lam_max))
        object.__setattr__(self, "condition_number", cond)


@dataclass(frozen=True)
class GIFit:
    """Fitted parameters together with the Gram matrices that produced them.

    Attributes
    ----------
    beta_hat : ndarray, shape (p,)
        Causal coefficient estimate.
    k_opt_hat : ndarray, shape (p,)
        Minimizer-scale confounding estimate.
    k_hat : ndarray, shape (p,)
        Confounding covariance estimate; equals ``scatter @ k_opt_hat / N``.
    sigma_y_sq_hat : float
        Pooled response noise variance.
    resid_var_causal : float
        ``|Y - X beta_hat|^2 / N``, the residual variance under the causal
        coefficient alone (noise scale of the interventional baseline).
    gram : ndarray, shape (p, p)
        ``M^T M``.
    scatter : ndarray, shape (p, p)
        ``X^T X - M^T M`` (pooled within-environment scatter).
    """

    beta_hat: np.ndarray
    k_opt_hat: np.ndarray
    k_hat: np.ndarray
    sigma_y_sq_hat: float
    resid_var_causal: float
    gram: np.ndarray
    scatter: np.ndarray
    summaries: list[EnvironmentSummary]
    n_total: int
    rank_report: RankReport
    intercept: bool = False
    rank_tol: float = DEFAULT_RANK_TOL

    @property
    def p(self) -> int:
        return self.beta_hat.shape[0]


def check_identifiability(summaries: list[EnvironmentSummary],
                          rank_tol: float = DEFAULT_RANK_TOL) -> RankReport:
    """Eigen-based rank check of the weighted outer products of source means."""
    if not summaries:
        raise ValueError("need at least one environment summary")
    g = sum(s.n_z * np.outer(s.mu_hat, s.mu_hat) for s in summaries)
    eigenvalues = np.linalg.eigvalsh(sym(g))
    return RankReport(eigenvalues=eigenvalues, rank_tol=rank_tol)


def estimate_noise_variance(d: Dataset, beta: np.ndarray, k_opt: np.ndarray,
                            k: np.ndarray) -> float:
    """Pooled response noise variance.

    Mean squared residual of the full model plus the cross term
    ``k_opt^T k``; the cross term is a PSD quadratic form because
    ``k = scatter @ k_opt / N``, so the result is nonnegative.
    """
    m = centering_matrix(d).m
    resid = d.y - d.x @ np.asarray(beta, float) - (d.x - m) @ np.asarray(k_opt, float)
    return float(resid @ resid / d.n + np.dot(k_opt, k))


def fit(d: Dataset, rank_tol: float = DEFAULT_RANK_TOL) -> GIFit:
    """Fit the closed-form estimators on a multi-source dataset.

    Raises
    ------
    IdentifiabilityError
        If the environment means do not span the covariate space at
        ``rank_tol`` (the attached report carries the eigenvalues).
    DegenerateCovariatesError
        If the pooled within-environment scatter is numerically singular.
    """
    summaries = summarize(d)
    report = check_identifiability(summaries, rank_tol)
    if not report.identifiable:
        raise IdentifiabilityError(
            f"environment means span only {report.numerical_rank} of {d.p} "
            f"dimensions (eigenvalues {report.eigenvalues.tolist()})",
            report=report)

    m = centering_matrix(d, summaries).m
    gram = sym(m.T @ m)
    xtx = sym(d.x.T @ d.x)
    scatter = sym(xtx - gram)

    beta = gated_solve(gram, m.T @ d.y, rank_tol,
                       IdentifiabilityError("environment-mean Gram matrix is "
                                            "numerically singular", report=report))
    resid_causal = d.y - d.x @ beta
    cross = d.x.T @ resid_causal
    k_opt = gated_solve(
        scatter, cross, rank_tol,
        DegenerateCovariatesError(
            "pooled within-environment covariance is rank deficient"))
    k = cross / d.n
    sigma_y_sq = estimate_noise_variance(d, beta, k_opt, k)

    return GIFit(
        beta_hat=beta,
        k_opt_hat=k_opt,
        k_hat=k,
        sigma_y_sq_hat=sigma_y_sq,
        resid_var_causal=float(resid_causal @ resid_causal / d.n),
        gram=gram,
        scatter=scatter,
        summaries=summaries,
        n_total=d.n,
        rank_report=report,
        intercept=d.intercept,
        rank_tol=rank_tol,
    )


def fit_ols(d: Dataset, rank_tol: float = DEFAULT_RANK_TOL):
    """Pooled least squares over all environments.

    Returns ``(beta_ols, resid_var)`` with the residual variance using
    denominator N.
    """
    xtx = sym(d.x.T @ d.x)
    beta = gated_solve(xtx, d.x.T @ d.y, rank_tol,
                       DegenerateCovariatesError("X^T X is numerically singular"))
    resid = d.y - d.x @ beta
    return beta, float(resid @ resid / d.n)


def empirical_risk(d: Dataset, beta: np.ndarray, k: np.ndarray) -> float:
    """Mean squared residual of the two-parameter model
    ``|Y - X beta - (X - M) k|^2 / N``."""
    m = centering_matrix(d).m
    resid = d.y - d.x @ np.asarray(beta, float) - (d.x - m) @ np.asarray(k, float)
    return float(resid @ resid / d.n)


def ellipsoid_slack(k: np.ndarray, sigma: np.ndarray, sigma_y_sq: float) -> float:
    """Slack ``sigma_y_sq - k^T sigma^{-1} k`` of the admissibility ellipsoid.

    The constraint holds strictly iff the returned slack is positive.
    ``sigma`` must be positive definite.
    """
    k = np.asarray(k, dtype=float).ravel()
    sigma = np.asarray(sigma, dtype=float)
    quad = quad_form_inv(
        sigma, k, PD_TOL,
        SingularCovarianceError("covariance matrix is not positive definite"))
    return float(sigma_y_sq - quad)


def normal_equation_residual(d: Dataset, beta: np.ndarray,
                             k_opt: np.ndarray) -> float:
    """Relative residual of the stacked first-order-condition system.

    The system couples ``(beta, k_opt)`` through ``X^T X``, the scatter
    ``X^T (X - M)`` and the right-hand sides ``X^T Y`` and ``(X - M)^T Y``.
    """
    system, rhs = stacked_normal_equations(d)
    theta = np.concatenate([beta, k_opt])
    return float(np.linalg.norm(system @ theta - rhs)
                 / max(1.0, np.linalg.norm(rhs)))


def stacked_normal_equations(d: Dataset):
    """Build the 2p x 2p stacked first-order-condition system and its RHS."""
    m = centering_matrix(d).m
    xtx = d.x.T @ d.x
    xtz = d.x.T @ (d.x - m)
    system = np.block([[xtx, xtz], [xtz, xtz]])
    rhs = np.concatenate([d.x.T @ d.y, (d.x - m).T @ d.y])
    return system, rhs


def _summary_to_dict(s: EnvironmentSummary) -> dict:
    return {
        "env_id": s.env_id,
        "label": s.label,
        "n_z": s.n_z,
        "mu_hat": s.mu_hat.tolist(),
        "sigma_hat": s.sigma_hat.tolist(),
    }


def _summary_from_dict(obj: dict) -> EnvironmentSummary:
    return EnvironmentSummary(
        env_id=int(obj["env_id"]),
        label=str(obj["label"]),
        n_z=int(obj["n_z"]),
        mu_hat=np.asarray(obj["mu_hat"], dtype=float),
        sigma_hat=np.asarray(obj["sigma_hat"], dtype=float),
    )


def fit_to_dict(f: GIFit) -> dict:
    """JSON-ready dictionary with a lossless representation of a fit."""
    return {
        "beta_hat": f.beta_hat.tolist(),
        "k_opt_hat": f.k_opt_hat.tolist(),
        "k_hat": f.k_hat.tolist(),
        "sigma_y_sq_hat": f.sigma_y_sq_hat,
        "resid_var_causal": f.resid_var_causal,
        "gram": f.gram.tolist(),
        "scatter": f.scatter.tolist(),
        "summaries": [_summary_to_dict(s) for s in f.summaries],
        "n_total": f.n_total,
        "intercept": f.intercept,
        "rank_tol": f.rank_tol,
        "rank_report": {
            "eigenvalues": f.rank_report.eigenvalues.tolist(),
            "rank_tol": f.rank_report.rank_tol,
            "numerical_rank": f.rank_report.numerical_rank,
            "identifiable": f.rank_report.identifiable,
            "condition_number": _encode_float(f.rank_report.condition_number),
        },
    }


def fit_from_dict(obj: dict) -> GIFit:
    """Inverse of :func:`fit_to_dict`."""
    report = RankReport(
        eigenvalues=np.asarray(obj["rank_report"]["eigenvalues"], dtype=float),
        rank_tol=float(obj["rank_report"]["rank_tol"]),
    )
    return GIFit(
        beta_hat=np.asarray(obj["beta_hat"], dtype=float),
        k_opt_hat=np.asarray(obj["k_opt_hat"], dtype=float),
        k_hat=np.asarray(obj["k_hat"], dtype=float),
        sigma_y_sq_hat=float(obj["sigma_y_sq_hat"]),
        resid_var_causal=float(obj["resid_var_causal"]),
        gram=np.asarray(obj["gram"], dtype=float),
        scatter=np.asarray(obj["scatter"], dtype=float),
        summaries=[_summary_from_dict(s) for s in obj["summaries"]],
        n_total=int(obj["n_total"]),
        rank_report=report,
        intercept=bool(obj["intercept"]),
        rank_tol=float(obj["rank_tol"]),
    )


def _encode_float(v: float):
    return v if np.isfinite(v) else repr(float(v))


def fit_to_json(f: GIFit, indent: int | None = 2) -> str:
    """Serialize a fit; floats keep their shortest round-trip representation."""
    return json.dumps(fit_to_dict(f), indent=indent)


def fit_from_json(text: str) -> GIFit:
    return fit_from_dict(json.loads(text))
