"""Synthetic response generation for an unseen test environment.

The core generator maps a covariate vector x and standard normal noise xi to

    k^T Sigma0^{-1} (x - mu0) + xi * sqrt(sigma_y_sq - k^T Sigma0^{-1} k)

using plug-in moments (mu0, Sigma0) of the test covariate sample. Two
baselines are provided: pooled least squares plus independent noise, and
the causal coefficient plus independent noise (the interventional
conditional law, which ignores confounding).

When the training design carries an intercept column, that coordinate is
excluded from (mu0, Sigma0, k): a constant column has zero variance and
zero covariance with the response noise. The coefficient vector keeps its
intercept coordinate.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from ._linalg import gated_solve, sym
from .errors import (
    EllipsoidViolationError,
    InsufficientTestSampleError,
    SingularCovarianceError,
)
from .estimator import PD_TOL, GIFit


@dataclass(frozen=True)
class GeneratorSpec:
    """Frozen parameters of the response generator for one test sample.

    ``radicand`` is the noise variance ``sigma_y_sq - k^T Sigma0^{-1} k``
    after truncation at zero; ``truncated`` records whether the raw value
    was negative.
    """

    beta: np.ndarray
    k: np.ndarray
    sigma_y_sq: float
    mu0: np.ndarray
    sigma0: np.ndarray
    radicand: float
    truncated: bool
    intercept: bool = False

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, float).ravel())
        object.__setattr__(self, "k", np.asarray(self.k, float).ravel())
        object.__setattr__(self, "mu0", np.asarray(self.mu0, float).ravel())
        object.__setattr__(self, "sigma0", sym(np.asarray(self.sigma0, float)))
        if self.radicand < 0:
            raise ValueError("radicand must be nonnegative")

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    def _active(self) -> slice:
        return slice(1, self.p) if self.intercept else slice(0, self.p)


def spec_from_moments(beta, k, sigma_y_sq, mu0, sigma0, intercept=False,
                      strict=False) -> GeneratorSpec:
    """Assemble a generator from explicit parameters and test moments.

    A negative raw radicand (confounding vector outside the admissibility
    ellipsoid of the test covariance) is truncated to zero with a warning,
    or raised in strict mode.
    """
    beta = np.asarray(beta, float).ravel()
    k = np.asarray(k, float).ravel()
    mu0 = np.asarray(mu0, float).ravel()
    sigma0 = sym(np.asarray(sigma0, float))
    active = slice(1, beta.size) if intercept else slice(0, beta.size)
    k_a = k[active]
    if k_a.size:
        w = _solve_active(sigma0[active, active], k_a)
        raw = float(sigma_y_sq - k_a @ w)
    else:
        raw = float(sigma_y_sq)
    truncated = raw < 0.0
    if truncated:
        if strict:
            raise EllipsoidViolationError(
                f"test-covariance ellipsoid violated: slack {raw:.6g} < 0")
        warnings.warn(
            f"noise variance truncated to zero (raw value {raw:.6g}); the "
            "fitted confounding vector lies outside the test ellipsoid",
            RuntimeWarning, stacklevel=2)
    return GeneratorSpec(beta=beta, k=k, sigma_y_sq=float(sigma_y_sq),
                         mu0=mu0, sigma0=sigma0, radicand=max(raw, 0.0),
                         truncated=truncated, intercept=intercept)


def _solve_active(sigma_active: np.ndarray, k_active: np.ndarray) -> np.ndarray:
    return gated_solve(
        sigma_active, k_active, PD_TOL,
        SingularCovarianceError("test covariate covariance is singular"))


def build_generator(fit: GIFit, x_test: np.ndarray,
                    strict: bool = False) -> GeneratorSpec:
    """Estimate test moments from a covariate sample and assemble the
    generator from a fit.

    Requires more test rows than non-intercept covariates, and a positive
    definite test covariance on the non-intercept block.
    """
    x_test = _check_test_matrix(fit, x_test)
    n0 = x_test.shape[0]
    p_active = fit.p - 1 if fit.intercept else fit.p
    if n0 <= p_active:
        raise InsufficientTestSampleError(
            f"need more than {p_active} test rows to estimate moments, got {n0}")
    mu0 = x_test.mean(axis=0)
    centered = x_test - mu0
    sigma0 = sym(centered.T @ centered) / n0
    if fit.intercept:
        sigma0[0, :] = 0.0
        sigma0[:, 0] = 0.0
    return spec_from_moments(fit.beta_hat, fit.k_hat, fit.sigma_y_sq_hat,
                             mu0, sigma0, intercept=fit.intercept,
                             strict=strict)


def _check_test_matrix(fit: GIFit, x_test: np.ndarray) -> np.ndarray:
    x_test = np.asarray(x_test, dtype=float)
    if x_test.ndim == 1:
        x_test = x_test[:, None]
    if x_test.shape[1] != fit.p:
        raise ValueError(f"test covariates have {x_test.shape[1]} columns, "
                         f"fit expects {fit.p}")
    if not np.all(np.isfinite(x_test)):
        raise ValueError("test covariates must be finite")
    if fit.intercept and not np.all(x_test[:, 0] == 1.0):
        raise ValueError("fit has an intercept but test column 0 is not all ones")
    return x_test


def _shift_terms(spec: GeneratorSpec, x: np.ndarray) -> np.ndarray:
    """Confounding shift k^T Sigma0^{-1} (x - mu0) for rows of x."""
    active = spec._active()
    k_a = spec.k[active]
    if not k_a.size:
        return np.zeros(x.shape[0])
    w = _solve_active(spec.sigma0[active, active], k_a)
    return (x[:, active] - spec.mu0[active]) @ w


def g_eval(spec: GeneratorSpec, x: np.ndarray, xi: float) -> float:
    """Evaluate the generator at one covariate vector and one noise value."""
    x = np.asarray(x, dtype=float).ravel()[None, :]
    return float(_shift_terms(spec, x)[0] + xi * np.sqrt(spec.radicand))


def generate_responses(spec: GeneratorSpec, x_test: np.ndarray,
                       seed: int) -> np.ndarray:
    """Synthesize one response per test row: beta^T x plus generator noise.

    Deterministic for a fixed seed; distinct seeds give independent streams.
    """
    x_test = np.asarray(x_test, dtype=float)
    if x_test.ndim == 1:
        x_test = x_test[:, None]
    xi = np.random.default_rng(seed).standard_normal(x_test.shape[0])
    return (x_test @ spec.beta + _shift_terms(spec, x_test)
            + xi * np.sqrt(spec.radicand))


def do_interventional_generator(fit: GIFit, x_test: np.ndarray,
                                seed: int) -> np.ndarray:
    """Baseline: causal coefficient plus independent noise.

    Emulates the interventional conditional law; the noise scale is the
    residual standard deviation under the causal coefficient alone.
    """
    x_test = _check_test_matrix(fit, x_test)
    xi = np.random.default_rng(seed).standard_normal(x_test.shape[0])
    return x_test @ fit.beta_hat + xi * np.sqrt(fit.resid_var_causal)


def ols_generator(beta_ols: np.ndarray, resid_var: float, x_test: np.ndarray,
                  seed: int) -> np.ndarray:
    """Baseline: pooled least squares plus independent residual noise."""
    x_test = np.asarray(x_test, dtype=float)
    if x_test.ndim == 1:
        x_test = x_test[:, None]
    if resid_var < 0:
        raise ValueError("residual variance must be nonnegative")
    xi = np.random.default_rng(seed).standard_normal(x_test.shape[0])
    return x_test @ np.asarray(beta_ols, float).ravel() + xi * np.sqrt(resid_var)


def spec_to_dict(spec: GeneratorSpec) -> dict:
    return {
        "beta": spec.beta.tolist(),
        "k": spec.k.tolist(),
        "sigma_y_sq": spec.sigma_y_sq,
        "mu0": spec.mu0.tolist(),
        "sigma0": spec.sigma0.tolist(),
        "radicand": spec.radicand,
        "truncated": spec.truncated,
        "intercept": spec.intercept,
    }


def spec_from_dict(obj: dict) -> GeneratorSpec:
    return GeneratorSpec(
        beta=np.asarray(obj["beta"], float),
        k=np.asarray(obj["k"], float),
        sigma_y_sq=float(obj["sigma_y_sq"]),
        mu0=np.asarray(obj["mu0"], float),
        sigma0=np.asarray(obj["sigma0"], float),
        radicand=float(obj["radicand"]),
        truncated=bool(obj["truncated"]),
        intercept=bool(obj["intercept"]),
    )


def spec_to_json(spec: GeneratorSpec, indent: int | None = 2) -> str:
    return json.dumps(spec_to_dict(spec), indent=indent)


def spec_from_json(text: str) -> GeneratorSpec:
    return spec_from_dict(json.loads(text))
