"""Ordinary least-squares baseline on the same standardized features as the GP."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._numerics import StandardizationStats, rank_revealing_lstsq
from .errors import ModelFormatError, NonFiniteInput, TooFewSamples
from .features import N_FEATURES, Dataset, EncodingConfig, extract_features

SCHEMA_VERSION = 1
MIN_SAMPLES = N_FEATURES


@dataclass(frozen=True)
class LrModel:
    weights: np.ndarray
    stats: StandardizationStats

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)):
            raise NonFiniteInput("LR weights must be finite")

    def predict_matrix(self, X_raw) -> np.ndarray:
        return self.stats.apply(np.atleast_2d(X_raw)) @ self.weights

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model_kind": "lr",
            "stats": self.stats.to_dict(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LrModel":
        try:
            if d.get("schema_version") != SCHEMA_VERSION:
                raise ModelFormatError(f"unsupported schema_version {d.get('schema_version')!r}")
            stats = StandardizationStats.from_dict(d["stats"])
            weights = np.asarray(d["weights"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"malformed LR model: {exc}") from exc
        if weights.shape != stats.mean.shape:
            raise ModelFormatError("weights and standardization stats differ in length")
        return cls(weights, stats)


def fit_ols_matrix(X_raw, y, min_samples: int = MIN_SAMPLES, standardize: bool = True) -> LrModel:
    X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
    y = np.asarray(y, dtype=float)
    n = X_raw.shape[0]
    if n < min_samples:
        raise TooFewSamples(f"OLS fit needs at least {min_samples} samples, got {n}")
    if not (np.all(np.isfinite(X_raw)) and np.all(np.isfinite(y))):
        raise NonFiniteInput("design matrix and targets must be finite")
    if standardize:
        stats = StandardizationStats.from_matrix(X_raw)
    else:
        stats = StandardizationStats.identity(X_raw.shape[1])
    w, _ = rank_revealing_lstsq(stats.apply(X_raw), y)
    return LrModel(w, stats)


def fit_ols(dataset: Dataset) -> LrModel:
    return fit_ols_matrix(dataset.feature_matrix(), dataset.energies())


def predict_lr(model: LrModel, config: EncodingConfig) -> float:
    return float(model.predict_matrix(extract_features(config))[0])
