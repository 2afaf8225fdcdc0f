"""Gaussian process regression with a linear basis and an exponential kernel.

The predictor is ``h(x)^T beta + g(x)`` where ``h`` is the identity basis on the
(standardized) feature vector and ``g`` is a zero-mean GP with covariance

    k(xp, xq) = sigma_f2 * exp(-||xp - xq|| / length_scale) + sigma_n2 * [p == q]

``beta`` is profiled out of the marginal likelihood by generalized least
squares, so the hyperparameter search runs over three log-parameters only.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.optimize import minimize

from . import _accel
from ._numerics import StandardizationStats, rank_revealing_lstsq
from .errors import (
    ModelFormatError,
    NonFiniteInput,
    NotPositiveDefinite,
    OptimizationDiverged,
    RankDeficientBasis,
    TooFewSamples,
)
from .features import N_FEATURES, Dataset, EncodingConfig, extract_features

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MIN_SAMPLES = N_FEATURES + 1
NOISE_FLOOR_REL = 1e-10
_LOG_2PI = math.log(2.0 * math.pi)
# a failed factorization inside the search is scored as this negative log-likelihood
_PENALTY = 1e25


@dataclass(frozen=True)
class Hyperparams:
    sigma_f2: float
    length_scale: float
    sigma_n2: float

    def __post_init__(self):
        vals = (self.sigma_f2, self.length_scale, self.sigma_n2)
        if not all(math.isfinite(v) for v in vals):
            raise NonFiniteInput(f"hyperparameters must be finite, got {vals}")
        if self.sigma_f2 <= 0 or self.length_scale <= 0 or self.sigma_n2 < 0:
            raise ValueError(
                f"need sigma_f2 > 0, length_scale > 0, sigma_n2 >= 0; got {vals}"
            )

    def to_dict(self) -> dict:
        return {"sigma_f2": self.sigma_f2, "length_scale": self.length_scale, "sigma_n2": self.sigma_n2}


@dataclass(frozen=True)
class FitOptions:
    restarts: int = 5
    max_iterations: int = 200
    seed: int = 42
    convergence_tol: float = 1e-6
    # pin the noise variance instead of optimizing it (interpolation studies)
    fixed_sigma_n2: Optional[float] = None

    def __post_init__(self):
        if self.restarts < 1 or self.max_iterations < 1:
            raise ValueError("restarts and max_iterations must be >= 1")


# -- kernel -------------------------------------------------------------------

def kernel(xp, xq, hp: Hyperparams, same_sample: bool) -> float:
    xp = np.asarray(xp, dtype=float)
    xq = np.asarray(xq, dtype=float)
    if xp.shape != xq.shape:
        raise ValueError(f"dimension mismatch {xp.shape} vs {xq.shape}")
    if not (np.all(np.isfinite(xp)) and np.all(np.isfinite(xq))):
        raise NonFiniteInput("kernel inputs must be finite")
    d = math.sqrt(float(np.sum((xp - xq) ** 2)))
    return hp.sigma_f2 * math.exp(-d / hp.length_scale) + (hp.sigma_n2 if same_sample else 0.0)


def kernel_matrix(X, hp: Hyperparams) -> np.ndarray:
    X = _as_matrix(X)
    return _accel.exp_kernel(_accel.pairwise_distances(X), hp.sigma_f2, hp.length_scale, hp.sigma_n2)


def basis(x) -> np.ndarray:
    """Linear basis: the feature vector itself (the offset column is the intercept)."""
    return np.array(x, dtype=float, copy=True)


def _as_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("feature matrix contains non-finite values")
    return X


# -- likelihood ---------------------------------------------------------------

def _distinct_columns(H: np.ndarray) -> np.ndarray:
    """Indices of basis columns that are non-zero and not exact copies of an earlier one.

    Dropping exact duplicates up front (e.g. an ablated boolean group that now
    equals the offset column) keeps the solve independent of pivot tie-breaks.
    """
    keep = []
    for j in range(H.shape[1]):
        col = H[:, j]
        if not np.any(col):
            continue
        if any(np.array_equal(col, H[:, i]) for i in keep):
            continue
        keep.append(j)
    return np.array(keep, dtype=np.intp)


@dataclass
class _Solution:
    chol: np.ndarray
    beta: np.ndarray
    dual: np.ndarray
    lml: float
    rank: int


def _solve(D: np.ndarray, H: np.ndarray, y: np.ndarray, hp: Hyperparams) -> _Solution:
    n = y.shape[0]
    K = _accel.exp_kernel(D, hp.sigma_f2, hp.length_scale, hp.sigma_n2)
    try:
        L = cholesky(K, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise NotPositiveDefinite(f"kernel matrix not positive definite at {hp}") from exc
    keep = _distinct_columns(H)
    Z = solve_triangular(L, np.column_stack([H[:, keep], y]), lower=True, check_finite=False)
    A, b = Z[:, :-1], Z[:, -1]
    beta_kept, rank = rank_revealing_lstsq(A, b)
    if rank == 0:
        raise RankDeficientBasis("basis matrix has rank 0")
    w = b - A @ beta_kept
    beta = np.zeros(H.shape[1])
    beta[keep] = beta_kept
    lml = -0.5 * float(w @ w) - float(np.sum(np.log(np.diag(L)))) - 0.5 * n * _LOG_2PI
    dual = solve_triangular(L.T, w, lower=False, check_finite=False)
    return _Solution(L, beta, dual, lml, rank)


def log_marginal_likelihood(X, y, hp: Hyperparams) -> float:
    """Log marginal likelihood with the basis weights profiled out by GLS.

    ``X`` is the model-space (already standardized) n x d matrix; its rows are
    the basis vectors.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    return _solve(_accel.pairwise_distances(X), X, y, hp).lml


# -- model --------------------------------------------------------------------

@dataclass(frozen=True)
class GprModel:
    stats: StandardizationStats
    X: np.ndarray
    y: np.ndarray
    hp: Hyperparams
    beta: np.ndarray
    chol: np.ndarray = field(repr=False)
    dual: np.ndarray = field(repr=False)
    log_likelihood: float = float("nan")

    @classmethod
    def from_hyperparams(cls, X_raw, y, hp: Hyperparams, stats: StandardizationStats | None = None):
        """Condition on training data at fixed hyperparameters."""
        X_raw = _as_matrix(X_raw)
        y = np.asarray(y, dtype=float)
        stats = stats or StandardizationStats.from_matrix(X_raw)
        Xs = stats.apply(X_raw)
        sol = _solve(_accel.pairwise_distances(Xs), Xs, y, hp)
        return cls(stats, Xs, y, hp, sol.beta, sol.chol, sol.dual, sol.lml)

    def predict_matrix(self, X_raw) -> np.ndarray:
        Xs = self.stats.apply(_as_matrix(X_raw))
        Ks = self.hp.sigma_f2 * np.exp(-_accel.cross_distances(Xs, self.X) / self.hp.length_scale)
        out = Xs @ self.beta + Ks @ self.dual
        if not np.all(np.isfinite(out)):
            raise NonFiniteInput("prediction is not finite")
        return out

    def check_invariants(self, rtol_chol: float = 1e-10, rtol_dual: float = 1e-8) -> None:
        K = kernel_matrix(self.X, self.hp)
        recon = self.chol @ self.chol.T
        if np.linalg.norm(recon - K) > rtol_chol * np.linalg.norm(K):
            raise ModelFormatError("Cholesky factor does not reproduce the kernel matrix")
        resid = self.y - self.X @ self.beta
        err = np.linalg.norm(K @ self.dual - resid)
        if err > rtol_dual * max(np.linalg.norm(resid), np.linalg.norm(K @ self.dual), 1e-300):
            raise ModelFormatError(f"dual weights violate K @ dual == y - H beta (error {err:.3g})")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model_kind": "gpr",
            "stats": self.stats.to_dict(),
            "hyperparams": self.hp.to_dict(),
            "beta": self.beta.tolist(),
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "dual": self.dual.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GprModel":
        try:
            if d.get("schema_version") != SCHEMA_VERSION:
                raise ModelFormatError(f"unsupported schema_version {d.get('schema_version')!r}")
            stats = StandardizationStats.from_dict(d["stats"])
            hp = Hyperparams(**d["hyperparams"])
            X = np.asarray(d["X"], dtype=float)
            y = np.asarray(d["y"], dtype=float)
            beta = np.asarray(d["beta"], dtype=float)
            dual = np.asarray(d["dual"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"malformed GPR model: {exc}") from exc
        if X.ndim != 2 or X.shape[0] != y.shape[0] or dual.shape != y.shape or beta.shape != (X.shape[1],):
            raise ModelFormatError("inconsistent array shapes in GPR model")
        try:
            L = cholesky(kernel_matrix(X, hp), lower=True)
        except LinAlgError as exc:
            raise ModelFormatError("stored kernel matrix is not positive definite") from exc
        model = cls(stats, X, y, hp, beta, L, dual)
        model.check_invariants()
        return model


def predict(model: GprModel, config: EncodingConfig) -> float:
    return float(model.predict_matrix(extract_features(config)[None, :])[0])


# -- fitting ------------------------------------------------------------------

def _median_distance(D: np.ndarray) -> float:
    iu = np.triu_indices(D.shape[0], 1)
    d = D[iu]
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def fit_matrix(X_raw, y, opts: FitOptions = FitOptions()) -> GprModel:
    X_raw = _as_matrix(X_raw)
    y = np.asarray(y, dtype=float)
    n = X_raw.shape[0]
    if n < MIN_SAMPLES:
        raise TooFewSamples(f"GPR fit needs at least {MIN_SAMPLES} samples, got {n}")
    if y.shape != (n,) or not np.all(np.isfinite(y)):
        raise NonFiniteInput("targets must be a finite vector matching the feature rows")

    stats = StandardizationStats.from_matrix(X_raw)
    Xs = stats.apply(X_raw)
    D = _accel.pairwise_distances(Xs)

    var_y = float(np.var(y))
    if var_y > 0:
        y_scale = var_y
    else:
        y_scale = float(np.mean(y)) ** 2 or 1.0
    floor = NOISE_FLOOR_REL * y_scale
    med = _median_distance(D)

    pinned = opts.fixed_sigma_n2
    heuristic = [math.log(y_scale), math.log(med)]
    bounds = [
        (math.log(y_scale) - 18.0, math.log(y_scale) + 9.0),
        (math.log(med) - 7.0, math.log(med) + 7.0),
    ]
    if pinned is None:
        heuristic.append(math.log(0.05 * y_scale))
        bounds.append((math.log(floor), math.log(y_scale) + 2.0))
    heuristic = np.array(heuristic)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    def unpack(theta) -> Hyperparams:
        sn2 = pinned if pinned is not None else max(math.exp(theta[2]), floor)
        return Hyperparams(math.exp(theta[0]), math.exp(theta[1]), sn2)

    def objective(theta):
        try:
            lml = _solve(D, Xs, y, unpack(theta)).lml
        except (NotPositiveDefinite, RankDeficientBasis, NonFiniteInput):
            return _PENALTY
        return -lml if math.isfinite(lml) else _PENALTY

    rng = np.random.default_rng(opts.seed)
    starts = [heuristic]
    for _ in range(opts.restarts - 1):
        starts.append(np.clip(heuristic + rng.uniform(-3.0, 3.0, size=heuristic.size), lo, hi))

    results = []
    for i, x0 in enumerate(starts):
        res = minimize(
            objective,
            x0,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": opts.max_iterations, "ftol": opts.convergence_tol},
        )
        if res.fun < _PENALTY and math.isfinite(res.fun):
            hp = unpack(res.x)
            results.append((-float(res.fun), hp))
            logger.debug("restart %d: lml=%.6g hp=%s", i, -res.fun, hp)
    if not results:
        raise OptimizationDiverged(f"none of {opts.restarts} restarts reached a finite likelihood")
    best_lml, best_hp = max(results, key=lambda r: (r[0], -r[1].length_scale))
    sol = _solve(D, Xs, y, best_hp)
    return GprModel(stats, Xs, y, best_hp, sol.beta, sol.chol, sol.dual, sol.lml)


def fit(dataset: Dataset, opts: FitOptions = FitOptions()) -> GprModel:
    return fit_matrix(dataset.feature_matrix(), dataset.energies(), opts)
