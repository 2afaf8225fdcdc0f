"""Cross-validated MAPE, feature ablation, GPR-vs-LR comparison and scatter export."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import gpr, linreg
from .errors import (
    ConfigError,
    EncEnergyError,
    FoldError,
    InvalidK,
    LengthMismatch,
    NonPositiveTrueValue,
    UnknownSampleId,
)
from .features import Dataset, EncodingConfig, Standard
from .gpr import FitOptions

MODEL_KINDS = ("gpr", "lr")
GROUPINGS = ("standard", "resolution", "preset", "qp")

# scenario label, feature group, columns forced to a constant
ABLATION_SCENARIOS = (
    ("a", "pixels", (2,)),
    ("b", "preset", (6, 7)),
    ("c", "frames", (1,)),
    ("d", "standard", (3, 4, 5)),
    ("e", "qp", (8,)),
)
ABLATION_GROUPS = {name: cols for _, name, cols in ABLATION_SCENARIOS}


def mape(true_values, est_values) -> float:
    t = np.asarray(true_values, dtype=float)
    e = np.asarray(est_values, dtype=float)
    if t.shape != e.shape or t.ndim != 1:
        raise LengthMismatch(f"length mismatch: {t.shape} vs {e.shape}")
    if t.size == 0:
        raise LengthMismatch("need at least one value")
    if np.any(t <= 0):
        raise NonPositiveTrueValue("every true value must be > 0")
    return float(np.mean(np.abs(t - e) / t) * 100.0)


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray
    k: int

    def members(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.k)


def kfold_indices(n: int, k: int, seed: int = 42) -> FoldAssignment:
    """Seeded shuffle followed by round-robin assignment to ``k`` folds."""
    if k < 2 or k > n:
        raise InvalidK(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % k
    return FoldAssignment(fold_of, k)


@dataclass(frozen=True)
class CvRow:
    sample_id: str
    e_true: float
    e_est: float
    fold: int


@dataclass(frozen=True)
class CvReport:
    per_sample: tuple[CvRow, ...]
    mape_percent: float
    model_kind: str = "gpr"
    k: int = 10
    seed: int = 42

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "k": self.k,
            "seed": self.seed,
            "mape_percent": self.mape_percent,
            "per_sample": [
                {"sample_id": r.sample_id, "e_true": r.e_true, "e_est": r.e_est, "fold": r.fold}
                for r in self.per_sample
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CvReport":
        try:
            rows = tuple(
                CvRow(r["sample_id"], float(r["e_true"]), float(r["e_est"]), int(r["fold"]))
                for r in d["per_sample"]
            )
            return cls(rows, float(d["mape_percent"]), d["model_kind"], int(d["k"]), int(d["seed"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed CV report: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_id", "e_true", "e_est", "fold"])
        for r in self.per_sample:
            w.writerow([r.sample_id, repr(r.e_true), repr(r.e_est), r.fold])
        return buf.getvalue()


def _fit_predict(model_kind: str, X_train, y_train, X_test, opts: FitOptions) -> np.ndarray:
    if model_kind == "gpr":
        return gpr.fit_matrix(X_train, y_train, opts).predict_matrix(X_test)
    if model_kind == "lr":
        return linreg.fit_ols_matrix(X_train, y_train).predict_matrix(X_test)
    raise ConfigError(f"model_kind must be one of {MODEL_KINDS}, got {model_kind!r}")


def cross_validate_matrix(
    ids: Sequence[str],
    X: np.ndarray,
    y: np.ndarray,
    model_kind: str = "gpr",
    k: int = 10,
    seed: int = 42,
    opts: FitOptions = FitOptions(),
) -> CvReport:
    """k-fold CV on rows already in canonical order.

    Every fold refits from scratch on its complement, so standardization
    statistics and hyperparameters never see the held-out rows.
    """
    if model_kind not in MODEL_KINDS:
        raise ConfigError(f"model_kind must be one of {MODEL_KINDS}, got {model_kind!r}")
    n = len(ids)
    folds = kfold_indices(n, k, seed)
    est = np.empty(n)
    for f in range(k):
        test = folds.fold_of == f
        try:
            est[test] = _fit_predict(model_kind, X[~test], y[~test], X[test], opts)
        except EncEnergyError as exc:
            raise FoldError(f, exc) from exc
    rows = tuple(CvRow(ids[i], float(y[i]), float(est[i]), int(folds.fold_of[i])) for i in range(n))
    return CvReport(rows, mape(y, est), model_kind, k, seed)


def cross_validate(
    dataset: Dataset,
    model_kind: str = "gpr",
    k: int = 10,
    seed: int = 42,
    opts: FitOptions = FitOptions(),
) -> CvReport:
    ds = dataset.sorted_by_id()
    return cross_validate_matrix(ds.sample_ids(), ds.feature_matrix(), ds.energies(), model_kind, k, seed, opts)


def ablated_matrix(X: np.ndarray, feature_group: str) -> np.ndarray:
    """Copy of ``X`` with the group's columns forced to 1 (all-ones for boolean groups)."""
    if feature_group not in ABLATION_GROUPS:
        raise ConfigError(f"feature_group must be one of {tuple(ABLATION_GROUPS)}, got {feature_group!r}")
    Xa = np.array(X, dtype=float, copy=True)
    Xa[:, list(ABLATION_GROUPS[feature_group])] = 1.0
    return Xa


def ablate(
    dataset: Dataset,
    feature_group: str,
    k: int = 10,
    seed: int = 42,
    opts: FitOptions = FitOptions(),
) -> float:
    ds = dataset.sorted_by_id()
    X = ablated_matrix(ds.feature_matrix(), feature_group)
    return cross_validate_matrix(ds.sample_ids(), X, ds.energies(), "gpr", k, seed, opts).mape_percent


@dataclass(frozen=True)
class AblationRow:
    scenario_label: str
    removed_feature_group: str
    mape_percent: float


@dataclass(frozen=True)
class AblationReport:
    rows: tuple[AblationRow, ...]
    baseline_mape: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "baseline_mape": self.baseline_mape,
            "rows": [
                {"scenario": r.scenario_label, "feature": r.removed_feature_group, "mape_percent": r.mape_percent}
                for r in self.rows
            ],
        }


def ablation_study(
    dataset: Dataset,
    k: int = 10,
    seed: int = 42,
    opts: FitOptions = FitOptions(),
    with_baseline: bool = True,
) -> AblationReport:
    rows = tuple(
        AblationRow(label, group, ablate(dataset, group, k, seed, opts))
        for label, group, _ in ABLATION_SCENARIOS
    )
    base = cross_validate(dataset, "gpr", k, seed, opts).mape_percent if with_baseline else float("nan")
    return AblationReport(rows, base)


@dataclass(frozen=True)
class ModelComparison:
    gpr_mape: float
    lr_mape: float
    gpr_report: CvReport
    lr_report: CvReport


def compare_models(
    dataset: Dataset, k: int = 10, seed: int = 42, opts: FitOptions = FitOptions()
) -> ModelComparison:
    g = cross_validate(dataset, "gpr", k, seed, opts)
    lr = cross_validate(dataset, "lr", k, seed, opts)
    return ModelComparison(g.mape_percent, lr.mape_percent, g, lr)


# -- plot data ----------------------------------------------------------------

def group_label(config: EncodingConfig, grouping: str) -> str:
    if grouping == "standard":
        return Standard(config.standard).name
    if grouping == "preset":
        return config.preset.label
    if grouping == "resolution":
        # vertical resolution; portrait sequences are grouped by their horizontal one
        return str(config.width if config.width < config.height else config.height)
    if grouping == "qp":
        qp = config.qp / 4 if config.standard == Standard.AV1 else config.qp
        return f"{qp:g}"
    raise ConfigError(f"grouping must be one of {GROUPINGS}, got {grouping!r}")


def scatter_rows(report: CvReport, dataset: Dataset, grouping: str) -> list[tuple[str, str, float, float]]:
    by_id = {s.sample_id: s for s in dataset}
    rows = []
    for r in report.per_sample:
        sample = by_id.get(r.sample_id)
        if sample is None:
            raise UnknownSampleId(f"report sample {r.sample_id!r} not found in dataset")
        rows.append((r.sample_id, group_label(sample.config, grouping), r.e_true, r.e_est))
    return rows


def export_scatter(report: CvReport, dataset: Dataset, grouping: str, path) -> Path:
    rows = scatter_rows(report, dataset, grouping)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "group_label", "e_true", "e_est"])
        for sid, label, et, ee in rows:
            w.writerow([sid, label, repr(et), repr(ee)])
    return path
