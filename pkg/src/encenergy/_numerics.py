"""Shared preprocessing and least-squares helpers for the GP and LR models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_matrix(cls, X: np.ndarray) -> "StandardizationStats":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        # constant columns (the offset, ablated features) pass through untouched
        constant = np.all(X == X[0], axis=0)
        mean[constant] = 0.0
        scale[constant] = 1.0
        return cls(mean, scale)

    @classmethod
    def identity(cls, dim: int) -> "StandardizationStats":
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        mean = np.asarray(d["mean"], dtype=float)
        scale = np.asarray(d["scale"], dtype=float)
        if mean.shape != scale.shape or np.any(scale <= 0) or not np.all(np.isfinite(scale)):
            raise ValueError("standardization scale must be positive and finite")
        return cls(mean, scale)


def rank_revealing_lstsq(A: np.ndarray, b: np.ndarray, rtol: float = RANK_RTOL):
    """Basic least-squares solution of ``A w ~ b`` via column-pivoted QR.

    Columns whose pivot magnitude falls below ``rtol`` times the largest pivot
    are treated as linearly dependent and get zero weight.

    Returns ``(w, rank)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n_cols = A.shape[1]
    Q, R, piv = qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(n_cols), 0
    rank = int(np.sum(diag > rtol * diag[0]))
    w_piv = solve_triangular(R[:rank, :rank], Q[:, :rank].T @ b, lower=False)
    w = np.zeros(n_cols)
    w[piv[:rank]] = w_piv
    return w, rank
