"""Multi-source data model: CSV ingestion, per-environment summaries and the
per-environment averaging operator.

The averaging operator that replaces each covariate row by the mean of its
environment is never materialized as an N x N matrix; only its action
(group-by averaging) is implemented. Per-environment covariances use
denominator ``n_z`` (not ``n_z - 1``), which differs from the default of
most statistics libraries; downstream algebraic identities depend on it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._linalg import max_abs, sym
from .errors import EmptyInputError, ParseError, SchemaError

IDENTITY_RTOL = 1e-9


@dataclass(frozen=True)
class Dataset:
    """A multi-source sample of covariates, responses and source labels.

    Attributes
    ----------
    x : ndarray, shape (N, p)
        Covariate rows. If ``intercept`` is set, column 0 is all ones.
    y : ndarray, shape (N,)
        Responses.
    env : ndarray, shape (N,)
        Dense integer environment ids in ``{1..Z}``; every id occurs.
    labels : tuple of str
        Original environment labels; ``labels[z-1]`` is the label of id z.
    intercept : bool
        Whether column 0 of ``x`` is a ones column prepended at load time.
    """

    x: np.ndarray
    y: np.ndarray
    env: np.ndarray
    labels: tuple[str, ...]
    intercept: bool = False

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        env = np.asarray(self.env, dtype=np.int64).ravel()
        if x.ndim != 2:
            raise ValueError("x must be a 2-d array")
        n, p = x.shape
        if n == 0 or p == 0:
            raise EmptyInputError("dataset has no rows or no columns")
        if y.shape[0] != n or env.shape[0] != n:
            raise ValueError("x, y and env must have matching lengths")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("x and y must be finite")
        z = len(self.labels)
        if z < 1:
            raise ValueError("at least one environment label is required")
        present = np.unique(env)
        if present[0] < 1 or present[-1] > z or present.size != z:
            raise ValueError("every environment id in {1..Z} must occur")
        if self.intercept and not np.all(x[:, 0] == 1.0):
            raise ValueError("intercept flag is set but column 0 is not all ones")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "env", env)
        object.__setattr__(self, "labels", tuple(str(v) for v in self.labels))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_envs(self) -> int:
        return len(self.labels)

    def rows_of(self, env_id: int) -> np.ndarray:
        """Boolean mask selecting the rows of one environment."""
        return self.env == env_id

    def restrict(self, env_ids) -> "Dataset":
        """Sub-dataset containing only the given environments.

        Ids are remapped densely in the order given; labels follow.
        """
        env_ids = list(env_ids)
        if not env_ids:
            raise ValueError("need at least one environment id")
        mask = np.isin(self.env, env_ids)
        remap = {old: new + 1 for new, old in enumerate(env_ids)}
        new_env = np.array([remap[e] for e in self.env[mask]], dtype=np.int64)
        return Dataset(
            x=self.x[mask],
            y=self.y[mask],
            env=new_env,
            labels=tuple(self.labels[i - 1] for i in env_ids),
            intercept=self.intercept,
        )


@dataclass(frozen=True)
class EnvironmentSummary:
    """Per-source sample size, mean and covariance (denominator ``n_z``)."""

    env_id: int
    label: str
    n_z: int
    mu_hat: np.ndarray
    sigma_hat: np.ndarray

    def __post_init__(self):
        if self.n_z < 1:
            raise ValueError("n_z must be positive")
        mu = np.asarray(self.mu_hat, dtype=float).ravel()
        sig = sym(np.asarray(self.sigma_hat, dtype=float))
        if sig.shape != (mu.size, mu.size):
            raise ValueError("sigma_hat must be p x p")
        object.__setattr__(self, "mu_hat", mu)
        object.__setattr__(self, "sigma_hat", sig)


@dataclass(frozen=True)
class CenteringMatrix:
    """Row-wise environment means: row i equals mu_hat of the source of row i."""

    m: np.ndarray


@dataclass(frozen=True)
class IdentityReport:
    """Residuals of the exact block-averaging identities, max-abs norms.

    ``passed`` requires every residual to be at most ``tol`` times
    ``scale = max(1, max|X^T X|)``.
    """

    residual_cross: float
    residual_scatter: float
    residual_gram: float
    scale: float
    tol: float = IDENTITY_RTOL
    passed: bool = field(init=False)

    def __post_init__(self):
        bound = self.tol * self.scale
        ok = (self.residual_cross <= bound
              and self.residual_scatter <= bound
              and self.residual_gram <= bound)
        object.__setattr__(self, "passed", bool(ok))


def load_csv(path, response_col, env_col, covariate_cols,
             add_intercept=False) -> Dataset:
    """Read a multi-source sample from an RFC-4180 style CSV file.

    Environment labels may be arbitrary strings; they are mapped to dense
    ids 1..Z in order of first appearance. Numeric cells must parse as
    floats with '.' as decimal separator. ``response_col`` may be None
    (responses default to zero), for covariate-only workflows.
    """
    covariate_cols = list(covariate_cols)
    named = [env_col, *covariate_cols]
    if response_col is not None:
        named.insert(0, response_col)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        col_index = {}
        for name in named:
            if name not in header:
                raise SchemaError(f"{path}: column {name!r} not found in header")
            col_index[name] = header.index(name)

        xs, ys, raw_env = [], [], []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) < len(header):
                raise ParseError(f"{path}: row {rownum} has {len(row)} cells, "
                                 f"expected {len(header)}")

            def cell(name):
                text = row[col_index[name]].strip()
                try:
                    return float(text)
                except ValueError:
                    raise ParseError(
                        f"{path}: row {rownum}, column {name!r}: "
                        f"cannot parse {text!r} as a number") from None

            ys.append(cell(response_col) if response_col is not None else 0.0)
            xs.append([cell(name) for name in covariate_cols])
            raw_env.append(row[col_index[env_col]].strip())

    if not ys:
        raise EmptyInputError(f"{path}: no data rows")

    labels: list[str] = []
    ids = {}
    env = np.empty(len(raw_env), dtype=np.int64)
    for i, lab in enumerate(raw_env):
        if lab not in ids:
            labels.append(lab)
            ids[lab] = len(labels)
        env[i] = ids[lab]

    x = np.asarray(xs, dtype=float)
    if add_intercept:
        x = np.hstack([np.ones((x.shape[0], 1)), x])
    return Dataset(x=x, y=np.asarray(ys), env=env, labels=tuple(labels),
                   intercept=add_intercept)


def load_covariate_csv(path, covariate_cols, add_intercept=False) -> np.ndarray:
    """Read a covariate-only CSV (same conventions as :func:`load_csv`)."""
    covariate_cols = list(covariate_cols)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyInputError(f"{path}: file is empty") from None
        index = []
        for name in covariate_cols:
            if name not in header:
                raise SchemaError(f"{path}: column {name!r} not found in header")
            index.append(header.index(name))
        rows = []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            parsed = []
            for name, i in zip(covariate_cols, index):
                text = row[i].strip()
                try:
                    parsed.append(float(text))
                except ValueError:
                    raise ParseError(
                        f"{path}: row {rownum}, column {name!r}: "
                        f"cannot parse {text!r} as a number") from None
            rows.append(parsed)
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    x = np.asarray(rows, dtype=float)
    if add_intercept:
        x = np.hstack([np.ones((x.shape[0], 1)), x])
    return x


def summarize(d: Dataset) -> list[EnvironmentSummary]:
    """Per-environment sample sizes, means and covariances.

    Covariances use denominator ``n_z``; a single-row environment therefore
    has a zero covariance matrix.
    """
    out = []
    for z in range(1, d.n_envs + 1):
        rows = d.x[d.rows_of(z)]
        n_z = rows.shape[0]
        mu = rows.mean(axis=0)
        centered = rows - mu
        sigma = sym(centered.T @ centered) / n_z
        out.append(EnvironmentSummary(env_id=z, label=d.labels[z - 1],
                                      n_z=n_z, mu_hat=mu, sigma_hat=sigma))
    return out


def centering_matrix(d: Dataset,
                     summaries: list[EnvironmentSummary] | None = None
                     ) -> CenteringMatrix:
    """Matrix whose row i is the covariate mean of the environment of row i."""
    if summaries is None:
        summaries = summarize(d)
    means = np.stack([s.mu_hat for s in summaries])
    return CenteringMatrix(m=means[d.env - 1])


def response_means(d: Dataset) -> np.ndarray:
    """Per-environment response means, indexed by environment id - 1."""
    return np.array([d.y[d.rows_of(z)].mean() for z in range(1, d.n_envs + 1)])


def verify_identities(d: Dataset, m: np.ndarray | None = None) -> IdentityReport:
    """Check the exact algebraic identities tying X, the environment-mean
    matrix M and the per-environment summaries:

    * ``X^T M = M^T M``
    * ``X^T X - M^T M = sum_z n_z Sigma_hat_z``
    * ``M^T M = sum_z n_z mu_hat_z mu_hat_z^T``

    ``m`` may be supplied explicitly (e.g. as a negative control); by
    default it is recomputed from the dataset.
    """
    summaries = summarize(d)
    if m is None:
        m = centering_matrix(d, summaries).m
    m = np.asarray(m, dtype=float)
    xtx = d.x.T @ d.x
    xtm = d.x.T @ m
    mtm = m.T @ m
    weighted_cov = sum(s.n_z * s.sigma_hat for s in summaries)
    weighted_outer = sum(s.n_z * np.outer(s.mu_hat, s.mu_hat) for s in summaries)
    return IdentityReport(
        residual_cross=max_abs(xtm - mtm),
        residual_scatter=max_abs(xtx - mtm - weighted_cov),
        residual_gram=max_abs(mtm - weighted_outer),
        scale=max(1.0, max_abs(xtx)),
    )
