"""Plug-in asymptotic covariance, confidence intervals, and data-source
selection for asymptotic efficiency.

The covariance estimate is a sandwich: with Phi the sample-size-weighted
outer-product matrix of source means and Omega_z a per-source middle term,

    acov = Phi^{-1} [ sum_z (w_z^2 / n_z) Omega_z ] Phi^{-1},  w_z = n_z / N.

Source selection splits the environments in half, averages per-subset
coefficient fits on the first half, and scores each subset of the second
half by the smallest efficiency key over directions orthogonal to its
deviation from the average.
"""

from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from ._linalg import gated_inverse, sym
from .data import Dataset, EnvironmentSummary, summarize
from .errors import (
    DegenerateCovariatesError,
    IdentifiabilityError,
    NotEnoughSourcesError,
    SelectionInfeasibleError,
)
from .estimator import DEFAULT_RANK_TOL, GIFit, fit
from .generator import build_generator, generate_responses

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AsymptoticReport:
    """Plug-in covariance of the coefficient estimate with normal CIs."""

    beta_hat: np.ndarray
    phi: np.ndarray
    omegas: list[np.ndarray]
    acov: np.ndarray
    std_errors: np.ndarray
    level: float
    ci_lower: np.ndarray
    ci_upper: np.ndarray


@dataclass(frozen=True)
class EfficiencyRanking:
    """Ranked p-subsets of sources with determinant scores and keys.

    ``combos`` are tuples of environment ids sorted by descending key;
    ties break by descending determinant score, then lexicographic ids.
    """

    combos: tuple[tuple[int, ...], ...]
    det_scores: np.ndarray
    keys: np.ndarray
    split: tuple[tuple[int, ...], tuple[int, ...]]
    beta_bar: np.ndarray
    sigma_hat: float


def plug_in_phi(summaries: list[EnvironmentSummary]) -> np.ndarray:
    """Sample-size-weighted outer products of source means, divided by N."""
    if not summaries:
        raise ValueError("need at least one environment summary")
    n_total = sum(s.n_z for s in summaries)
    g = sum(s.n_z * np.outer(s.mu_hat, s.mu_hat) for s in summaries)
    return sym(g) / n_total


def plug_in_omega(summary: EnvironmentSummary, beta: np.ndarray,
                  k: np.ndarray, sigma_sq: float) -> np.ndarray:
    """Per-source middle term of the sandwich covariance."""
    mu = summary.mu_hat
    beta = np.asarray(beta, float).ravel()
    k = np.asarray(k, float).ravel()
    a = float(mu @ beta)
    outer_mk = np.outer(k, mu)
    return sym(a * a * summary.sigma_hat - a * (outer_mk + outer_mk.T)
               + np.outer(mu, mu) * sigma_sq)


def asymptotic_covariance(fit_result: GIFit, level: float = 0.95
                          ) -> AsymptoticReport:
    """Plug-in sandwich covariance and symmetric normal confidence intervals."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    summaries = fit_result.summaries
    n_total = fit_result.n_total
    phi = plug_in_phi(summaries)
    phi_inv = gated_inverse(
        phi, fit_result.rank_tol,
        IdentifiabilityError("weighted mean outer-product matrix is singular",
                             report=fit_result.rank_report))
    omegas = [plug_in_omega(s, fit_result.beta_hat, fit_result.k_hat,
                            fit_result.sigma_y_sq_hat) for s in summaries]
    middle = sum((s.n_z / n_total**2) * om for s, om in zip(summaries, omegas))
    acov = sym(phi_inv @ middle @ phi_inv)
    std_errors = np.sqrt(np.clip(np.diag(acov), 0.0, None))
    q = float(ndtri(0.5 + level / 2.0))
    return AsymptoticReport(
        beta_hat=fit_result.beta_hat,
        phi=phi,
        omegas=omegas,
        acov=acov,
        std_errors=std_errors,
        level=level,
        ci_lower=fit_result.beta_hat - q * std_errors,
        ci_upper=fit_result.beta_hat + q * std_errors,
    )


def efficiency_key(summaries: list[EnvironmentSummary], beta_bar: np.ndarray,
                   sigma_hat: float, r: np.ndarray) -> float:
    """Nonnegative efficiency score of a direction r.

    Sums, over sources, ``n_z/N^2`` times the squared gap between
    ``mu_z^T beta_bar * sqrt(r^T Sigma_z r)`` and ``mu_z^T r * sigma_hat``.
    Positively homogeneous of degree two in r.
    """
    r = np.asarray(r, float).ravel()
    beta_bar = np.asarray(beta_bar, float).ravel()
    n_total = sum(s.n_z for s in summaries)
    total = 0.0
    for s in summaries:
        spread = np.sqrt(max(float(r @ s.sigma_hat @ r), 0.0))
        gap = float(s.mu_hat @ beta_bar) * spread - float(s.mu_hat @ r) * sigma_hat
        total += s.n_z / n_total**2 * gap * gap
    return total


def det_prefilter(summaries: list[EnvironmentSummary], subset_size: int,
                  top_b: int | None = None) -> list[tuple[tuple[int, ...], float]]:
    """Score every subset of ``subset_size`` sources by the absolute
    determinant of their stacked mean vectors; keep the ``top_b`` best.

    Ties break lexicographically on the sorted environment ids.
    """
    if not summaries:
        raise ValueError("need at least one environment summary")
    p = summaries[0].mu_hat.size
    if subset_size != p:
        raise ValueError(f"subset_size must equal the covariate dimension "
                         f"{p}, got {subset_size}")
    if len(summaries) < subset_size:
        raise NotEnoughSourcesError(
            f"need at least {subset_size} sources, have {len(summaries)}")
    by_id = {s.env_id: s for s in summaries}
    ids = sorted(by_id)
    scored = []
    for combo in itertools.combinations(ids, subset_size):
        stacked = np.column_stack([by_id[z].mu_hat for z in combo])
        scored.append((combo, abs(float(np.linalg.det(stacked)))))
    scored.sort(key=lambda item: (-item[1], item[0]))
    if top_b is not None:
        if top_b < 1:
            raise ValueError("top_b must be positive")
        scored = scored[:top_b]
    return scored


def orthogonal_complement_basis(direction: np.ndarray) -> np.ndarray:
    """Deterministically complete a direction to an orthonormal basis and
    return the complement vectors as rows, shape (p-1, p).

    Starts from the standard basis, drops the coordinate vector most
    aligned with the normalized direction, and orthonormalizes the rest in
    index order. A zero direction falls back to the first basis vector.
    """
    direction = np.asarray(direction, float).ravel()
    p = direction.size
    if p == 1:
        return np.empty((0, 1))
    norm = np.linalg.norm(direction)
    u = direction / norm if norm > 0.0 else _basis_vector(p, 0)
    drop = int(np.argmax(np.abs(u)))
    basis = [u]
    for j in range(p):
        if j == drop:
            continue
        v = _basis_vector(p, j)
        for b in basis:
            v = v - (b @ v) * b
        v /= np.linalg.norm(v)
        basis.append(v)
    return np.stack(basis[1:])


def _basis_vector(p: int, j: int) -> np.ndarray:
    e = np.zeros(p)
    e[j] = 1.0
    return e


def _fit_combos(d: Dataset, combos, rank_tol: float, max_workers: int,
                side: str) -> dict[tuple[int, ...], GIFit]:
    """Fit one estimator per source subset, skipping non-identifiable ones.

    Results are keyed by combo, so the outcome is independent of scheduling.
    """
    def attempt(combo):
        try:
            return combo, fit(d.restrict(list(combo)), rank_tol=rank_tol)
        except (IdentifiabilityError, DegenerateCovariatesError) as exc:
            logger.info("skipping %s combo %s: %s", side, combo, exc)
            return combo, None

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(attempt, combos))
    else:
        results = [attempt(c) for c in combos]
    return {combo: f for combo, f in results if f is not None}


def select_sources(d: Dataset, split_seed: int, top_b: int = 100,
                   rank_tol: float = DEFAULT_RANK_TOL,
                   max_workers: int = 1) -> EfficiencyRanking:
    """Rank p-subsets of sources by asymptotic-efficiency keys.

    The environments are split into random halves. Subsets of the first
    half produce an averaged coefficient and a pooled noise scale; each
    subset of the second half is scored by the smallest efficiency key
    over the directions orthogonal to its deviation from the average.
    Deterministic for a fixed ``split_seed``.
    """
    z = d.n_envs
    p = d.p
    if z < 2 * p:
        raise SelectionInfeasibleError(
            f"need at least {2 * p} sources to split into halves with "
            f"{p}-subsets on both sides, have {z}")

    rng = np.random.default_rng(split_seed)
    perm = [int(v) + 1 for v in rng.permutation(z)]
    half = (z + 1) // 2
    s1 = tuple(sorted(perm[:half]))
    s2 = tuple(sorted(perm[half:]))

    all_summaries = summarize(d)
    by_id = {s.env_id: s for s in all_summaries}

    s1_combos = [c for c, _ in det_prefilter([by_id[i] for i in s1], p, top_b)]
    s1_fits = _fit_combos(d, s1_combos, rank_tol, max_workers, "first-half")
    if not s1_fits:
        raise SelectionInfeasibleError(
            "no identifiable subset on the first half of the split")
    beta_bar = np.mean([f.beta_hat for f in s1_fits.values()], axis=0)

    try:
        aggregate = fit(d.restrict(list(s1)), rank_tol=rank_tol)
    except (IdentifiabilityError, DegenerateCovariatesError) as exc:
        raise SelectionInfeasibleError(
            f"aggregate fit on the first half failed: {exc}") from exc
    sigma_hat = float(np.sqrt(aggregate.sigma_y_sq_hat))

    s2_scored = det_prefilter([by_id[i] for i in s2], p, top_b)
    s2_fits = _fit_combos(d, [c for c, _ in s2_scored], rank_tol, max_workers,
                          "second-half")
    if not s2_fits:
        raise SelectionInfeasibleError(
            "no identifiable subset on the second half of the split")

    rows = []
    for combo, det_score in s2_scored:
        fitted = s2_fits.get(combo)
        if fitted is None:
            continue
        complement = orthogonal_complement_basis(fitted.beta_hat - beta_bar)
        if complement.shape[0] == 0:
            key = efficiency_key(all_summaries, beta_bar, sigma_hat,
                                 np.ones(1))
        else:
            key = min(efficiency_key(all_summaries, beta_bar, sigma_hat, r)
                      for r in complement)
        rows.append((combo, det_score, key))

    rows.sort(key=lambda row: (-row[2], -row[1], row[0]))
    return EfficiencyRanking(
        combos=tuple(row[0] for row in rows),
        det_scores=np.array([row[1] for row in rows]),
        keys=np.array([row[2] for row in rows]),
        split=(s1, s2),
        beta_bar=beta_bar,
        sigma_hat=sigma_hat,
    )


def aggregate_predictions(d: Dataset, combos, x_test: np.ndarray, seed: int,
                          strict: bool = False,
                          rank_tol: float = DEFAULT_RANK_TOL,
                          share_noise: bool = False) -> np.ndarray:
    """Average generated responses over per-subset fits.

    Each subset receives an independent seed-derived noise stream unless
    ``share_noise`` is set (then all subsets reuse the first stream). Fit
    errors from any subset propagate.
    """
    combos = [tuple(c) for c in combos]
    if not combos:
        raise ValueError("need at least one source subset")
    child_seeds = np.random.SeedSequence(seed).generate_state(len(combos))
    total = None
    for i, combo in enumerate(combos):
        fitted = fit(d.restrict(list(combo)), rank_tol=rank_tol)
        spec = build_generator(fitted, x_test, strict=strict)
        stream = int(child_seeds[0] if share_noise else child_seeds[i])
        values = generate_responses(spec, x_test, stream)
        total = values if total is None else total + values
    return total / len(combos)


def ranking_to_dict(r: EfficiencyRanking) -> dict:
    return {
        "combos": [list(c) for c in r.combos],
        "det_scores": r.det_scores.tolist(),
        "keys": r.keys.tolist(),
        "split": {"s1": list(r.split[0]), "s2": list(r.split[1])},
        "beta_bar": r.beta_bar.tolist(),
        "sigma_hat": r.sigma_hat,
    }


def report_to_dict(rep: AsymptoticReport) -> dict:
    return {
        "beta_hat": rep.beta_hat.tolist(),
        "phi": rep.phi.tolist(),
        "omegas": [om.tolist() for om in rep.omegas],
        "acov": rep.acov.tolist(),
        "std_errors": rep.std_errors.tolist(),
        "level": rep.level,
        "ci_lower": rep.ci_lower.tolist(),
        "ci_upper": rep.ci_upper.tolist(),
    }


def ranking_to_json(r: EfficiencyRanking, indent: int | None = 2) -> str:
    return json.dumps(ranking_to_dict(r), indent=indent)


def report_to_json(rep: AsymptoticReport, indent: int | None = 2) -> str:
    return json.dumps(report_to_dict(rep), indent=indent)
