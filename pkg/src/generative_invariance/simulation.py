"""Seeded data-generating processes for multi-source experiments.

Endogenous response noise is built by the Gaussian conditional
construction: with w_z = Sigma_z^{-1} k_star,

    eps = w_z^T (X - mu_z) + eta,   eta iid standard normal,

which gives Cov(X, eps) = k_star exactly and noise variance
``k_star^T Sigma_z^{-1} k_star + 1`` (admissibility slack exactly 1 in
every simulated environment). All draws are deterministic given the
configuration and seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._linalg import psd_sqrt, sym
from .data import Dataset
from .estimator import fit, fit_ols
from .evaluation import energy_distance
from .generator import (
    build_generator,
    do_interventional_generator,
    generate_responses,
    ols_generator,
)

from .asymptotics import asymptotic_covariance

STRUCTURE_CONDITION_LIMIT = 1e6


@dataclass(frozen=True)
class SimulationConfig:
    """Ground-truth parameters of a multi-source Gaussian simulation.

    ``s1`` scales the randomness of per-source covariances
    (``Sigma_z = A_z^T A_z + I`` with entries of ``A_z`` iid N(0, s1^2));
    ``s2`` scales the source means (entries iid N(0, s2^2)). With
    ``intercept`` set, coordinate 0 of the covariates is the constant 1,
    the structure describes the remaining coordinates and the confounding
    vector must have a zero intercept coordinate.
    """

    p: int
    z_envs: int
    n_per_env: tuple[int, ...]
    beta_star: np.ndarray
    k_star: np.ndarray
    s1: float = 1.0
    s2: float = 1.0
    intercept: bool = False
    seed: int = 0

    def __post_init__(self):
        n = self.n_per_env
        if isinstance(n, (int, np.integer)):
            n = (int(n),) * self.z_envs
        n = tuple(int(v) for v in np.atleast_1d(n))
        if len(n) == 1 and self.z_envs > 1:
            n = n * self.z_envs
        object.__setattr__(self, "n_per_env", n)
        beta = np.asarray(self.beta_star, dtype=float).ravel()
        k = np.asarray(self.k_star, dtype=float).ravel()
        object.__setattr__(self, "beta_star", beta)
        object.__setattr__(self, "k_star", k)
        if self.p < 1 or self.z_envs < 1:
            raise ValueError("p and z_envs must be positive")
        if len(self.n_per_env) != self.z_envs or min(self.n_per_env) < 1:
            raise ValueError("need one positive sample size per environment")
        if beta.size != self.p or k.size != self.p:
            raise ValueError("beta_star and k_star must have length p")
        if self.s1 < 0 or self.s2 < 0:
            raise ValueError("s1 and s2 must be nonnegative")
        if self.intercept and k[0] != 0.0:
            raise ValueError("a constant covariate cannot covary with the "
                             "response noise: k_star[0] must be 0")
        if self.intercept and self.p < 2:
            raise ValueError("intercept models need p >= 2")

    @property
    def p_active(self) -> int:
        return self.p - 1 if self.intercept else self.p

    @property
    def k_active(self) -> np.ndarray:
        return self.k_star[1:] if self.intercept else self.k_star


@dataclass(frozen=True)
class MultiEnvTruth:
    """Ground-truth record of one simulated multi-source world."""

    beta_star: np.ndarray
    k_star: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    noise_variances: np.ndarray
    cov_sqrts: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SweepResult:
    """Averaged per-method scores over a grid of intervention strengths."""

    grid: tuple[float, ...]
    scores: dict[str, np.ndarray]
    replicates: int

    def __post_init__(self):
        grid = tuple(float(s) for s in self.grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("the strength grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class CoverageResult:
    """Empirical CI coverage of the true coefficients plus diagnostics."""

    coverage: np.ndarray
    level: float
    replicates: int
    beta_star: np.ndarray
    mean_ci_width: np.ndarray
    mean_acov: np.ndarray
    mc_cov: np.ndarray


def _single_env_structure(p_active: int, k_active: np.ndarray, s1: float,
                          s2: float, rng) -> tuple[np.ndarray, np.ndarray, float]:
    a = rng.normal(0.0, s1, size=(p_active, p_active)) if s1 > 0 else \
        np.zeros((p_active, p_active))
    sigma = sym(a.T @ a) + np.eye(p_active)
    mu = rng.normal(0.0, s2, size=p_active) if s2 > 0 else np.zeros(p_active)
    quad = float(k_active @ np.linalg.solve(sigma, k_active))
    return mu, sigma, quad + 1.0


def draw_structure(cfg: SimulationConfig, rng) -> MultiEnvTruth:
    """Draw per-source means and covariances for one simulated world."""
    means, covs, variances = [], [], []
    for _ in range(cfg.z_envs):
        mu, sigma, var = _single_env_structure(cfg.p_active, cfg.k_active,
                                               cfg.s1, cfg.s2, rng)
        means.append(mu)
        covs.append(sigma)
        variances.append(var)
    covs = np.stack(covs)
    return MultiEnvTruth(
        beta_star=cfg.beta_star.copy(),
        k_star=cfg.k_star.copy(),
        means=np.stack(means),
        covariances=covs,
        noise_variances=np.array(variances),
        cov_sqrts=np.stack([psd_sqrt(c) for c in covs]),
    )


def _draw_env_rows(cfg: SimulationConfig, mu, sigma, cov_sqrt, n, rng):
    """One environment's covariate block and endogenous responses."""
    x_active = mu + rng.standard_normal((n, cfg.p_active)) @ cov_sqrt
    w = np.linalg.solve(sigma, cfg.k_active)
    eps = (x_active - mu) @ w + rng.standard_normal(n)
    if cfg.intercept:
        x = np.hstack([np.ones((n, 1)), x_active])
    else:
        x = x_active
    return x, x @ cfg.beta_star + eps


def sample_dataset(cfg: SimulationConfig, truth: MultiEnvTruth, rng) -> Dataset:
    """Sample a multi-source dataset conditional on a fixed structure."""
    xs, ys, envs = [], [], []
    for z in range(cfg.z_envs):
        x, y = _draw_env_rows(cfg, truth.means[z], truth.covariances[z],
                              truth.cov_sqrts[z], cfg.n_per_env[z], rng)
        xs.append(x)
        ys.append(y)
        envs.append(np.full(cfg.n_per_env[z], z + 1, dtype=np.int64))
    return Dataset(x=np.vstack(xs), y=np.concatenate(ys),
                   env=np.concatenate(envs),
                   labels=tuple(str(z + 1) for z in range(cfg.z_envs)),
                   intercept=cfg.intercept)


def simulate_multienv(cfg: SimulationConfig) -> tuple[Dataset, MultiEnvTruth]:
    """Draw a multi-source world and one dataset from it, from ``cfg.seed``."""
    children = np.random.SeedSequence(cfg.seed).spawn(2)
    truth = draw_structure(cfg, np.random.default_rng(children[0]))
    data = sample_dataset(cfg, truth, np.random.default_rng(children[1]))
    return data, truth


def simulate_test_environment(cfg: SimulationConfig, strength: float, n: int,
                              seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw one held-out environment at a given intervention strength.

    The covariance and mean scales split the strength at random
    (``s1 ~ U(0, strength)``, ``s2 = strength - s1``); the causal
    coefficient and confounding vector stay invariant.
    """
    if strength < 0:
        raise ValueError("strength must be nonnegative")
    rng = np.random.default_rng(seed)
    s1 = float(rng.uniform(0.0, strength)) if strength > 0 else 0.0
    s2 = strength - s1
    mu, sigma, _ = _single_env_structure(cfg.p_active, cfg.k_active, s1, s2, rng)
    x, y = _draw_env_rows(cfg, mu, sigma, psd_sqrt(sigma), n, rng)
    return x, y


def simulate_univariate_shift(train_cfg: SimulationConfig, s: float, seed: int,
                              n_test: int | None = None):
    """One-dimensional train/test pair under an additive covariate shift.

    Training covariates are a standard normal base plus a mean-1,
    variance-1 normal perturbation (second moment 2). Test covariates add
    an independent perturbation with second moment ``s``, its variance
    drawn uniformly from [0, s] and the squared mean making up the rest.
    Responses on both sides share the same coefficient and confounding
    covariance.

    Returns ``(train_dataset, x_test, y_test)``.
    """
    if train_cfg.p != 1 or train_cfg.intercept:
        raise ValueError("univariate shift requires p=1 without intercept")
    if train_cfg.z_envs != 1:
        raise ValueError("univariate shift uses a single training source")
    if s < 0:
        raise ValueError("s must be nonnegative")
    beta = float(train_cfg.beta_star[0])
    k = float(train_cfg.k_star[0])
    sigma_y_sq = k * k / 2.0 + 1.0

    rng = np.random.default_rng(seed)
    n = train_cfg.n_per_env[0]
    n_test = n if n_test is None else int(n_test)

    x_train = rng.standard_normal(n) + rng.normal(1.0, 1.0, size=n)
    eps = (x_train - 1.0) * (k / 2.0) + rng.standard_normal(n)
    train = Dataset(x=x_train[:, None], y=beta * x_train + eps,
                    env=np.ones(n, dtype=np.int64), labels=("1",))

    var_v = float(rng.uniform(0.0, s)) if s > 0 else 0.0
    mean_v = float(np.sqrt(max(s - var_v, 0.0)))
    v = mean_v + np.sqrt(var_v) * rng.standard_normal(n_test)
    x_test = rng.standard_normal(n_test) + v
    var_x0 = 1.0 + var_v
    resid_var = sigma_y_sq - k * k / var_x0
    if resid_var <= 0:
        raise ValueError("confounding too strong for the test variance; "
                         "use |k_star| < sqrt(2)")
    eps0 = (x_test - mean_v) * (k / var_x0) + \
        np.sqrt(resid_var) * rng.standard_normal(n_test)
    return train, x_test[:, None], beta * x_test + eps0


def energy_benchmark(cfg: SimulationConfig, s_grid, replicates: int,
                     seed: int) -> SweepResult:
    """Average the energy distances of three generators to the true test
    joint over a grid of shift strengths (univariate protocol).

    Compared per grid point: the confounding-aware generator, pooled least
    squares plus noise, and the causal coefficient plus noise.
    """
    s_grid = [float(s) for s in s_grid]
    if replicates < 1:
        raise ValueError("replicates must be positive")
    methods = ("gi", "ols", "causal")
    totals = {m: np.zeros(len(s_grid)) for m in methods}
    state = np.random.SeedSequence(seed).generate_state(
        4 * len(s_grid) * replicates, dtype=np.uint64)
    pos = 0
    for i, s in enumerate(s_grid):
        for _ in range(replicates):
            data_seed, gi_seed, ols_seed, do_seed = (
                int(v) for v in state[pos:pos + 4])
            pos += 4
            train, x_test, y_test = simulate_univariate_shift(cfg, s, data_seed)
            fitted = fit(train)
            beta_ols, resid_var = fit_ols(train)
            spec = build_generator(fitted, x_test)
            preds = {
                "gi": generate_responses(spec, x_test, gi_seed),
                "ols": ols_generator(beta_ols, resid_var, x_test, ols_seed),
                "causal": do_interventional_generator(fitted, x_test, do_seed),
            }
            truth_joint = np.hstack([x_test, y_test[:, None]])
            for m in methods:
                joint = np.hstack([x_test, preds[m][:, None]])
                totals[m][i] += energy_distance(truth_joint, joint).value
    scores = {m: totals[m] / replicates for m in methods}
    return SweepResult(grid=tuple(s_grid), scores=scores, replicates=replicates)


def draw_identifiable_structure(cfg: SimulationConfig, rng,
                                max_tries: int = 1000) -> MultiEnvTruth:
    """Redraw structures until the weighted mean outer-product matrix is
    well conditioned (condition number below 1e6)."""
    for _ in range(max_tries):
        truth = draw_structure(cfg, rng)
        means = truth.means
        if cfg.intercept:
            means = np.hstack([np.ones((cfg.z_envs, 1)), means])
        g = sum(n * np.outer(mu, mu) for n, mu in zip(cfg.n_per_env, means))
        eig = np.linalg.eigvalsh(sym(g))
        if eig[0] > 0 and eig[-1] / eig[0] < STRUCTURE_CONDITION_LIMIT:
            return truth
    raise RuntimeError("could not draw a well-conditioned structure; "
                       "increase s2 or the number of sources")


def coverage_study(cfg: SimulationConfig, replicates: int, level: float,
                   seed: int) -> CoverageResult:
    """Empirical coverage of normal confidence intervals for the true
    coefficients over repeated samples from one fixed structure."""
    if replicates < 1:
        raise ValueError("replicates must be positive")
    children = np.random.SeedSequence(seed).spawn(replicates + 1)
    truth = draw_identifiable_structure(cfg, np.random.default_rng(children[0]))

    covered = np.zeros(cfg.p)
    widths = np.zeros(cfg.p)
    acov_total = np.zeros((cfg.p, cfg.p))
    betas = np.empty((replicates, cfg.p))
    for i, child in enumerate(children[1:]):
        data = sample_dataset(cfg, truth, np.random.default_rng(child))
        report = asymptotic_covariance(fit(data), level=level)
        covered += ((report.ci_lower <= cfg.beta_star)
                    & (cfg.beta_star <= report.ci_upper))
        widths += report.ci_upper - report.ci_lower
        acov_total += report.acov
        betas[i] = report.beta_hat
    return CoverageResult(
        coverage=covered / replicates,
        level=level,
        replicates=replicates,
        beta_star=cfg.beta_star.copy(),
        mean_ci_width=widths / replicates,
        mean_acov=acov_total / replicates,
        mc_cov=np.cov(betas, rowvar=False, ddof=1).reshape(cfg.p, cfg.p),
    )
