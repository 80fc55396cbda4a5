"""Metrics, reference predictors and interpretability exports."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .data.samples import SampleSet
from .errors import ContractError
from .model import AttentionTrace, ModelConfig, community_prefix, group_matrices
from .tensor import Tensor
from .training import TrainConfig, predict_set


def _pair(yhat, y) -> tuple[np.ndarray, np.ndarray]:
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if yhat.shape != y.shape:
        raise ContractError(f"prediction length {yhat.size} != target length {y.size}")
    if y.size == 0:
        raise ContractError("metrics need at least one prediction")
    return yhat, y


def mae(yhat, y) -> float:
    yhat, y = _pair(yhat, y)
    return float(np.mean(np.abs(yhat - y)))


def rmse(yhat, y) -> float:
    yhat, y = _pair(yhat, y)
    return float(np.sqrt(np.mean((yhat - y) ** 2)))


@dataclass
class MetricsReport:
    mae: float
    rmse: float
    count: int
    per_location_mae: list[float]
    per_location_rmse: list[float]
    clamped_mae: float  # with predictions floored at 0
    clamped_rmse: float

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def metrics_report(yhat, y, locations, L: int | None = None) -> MetricsReport:
    yhat, y = _pair(yhat, y)
    locations = np.asarray(locations).reshape(-1)
    L = int(locations.max()) + 1 if L is None else L
    per_mae, per_rmse = [], []
    for d in range(L):
        m = locations == d
        per_mae.append(mae(yhat[m], y[m]) if m.any() else float("nan"))
        per_rmse.append(rmse(yhat[m], y[m]) if m.any() else float("nan"))
    clamped = np.maximum(yhat, 0.0)
    return MetricsReport(mae(yhat, y), rmse(yhat, y), int(y.size), per_mae, per_rmse,
                         mae(clamped, y), rmse(clamped, y))


# -- reference predictors --------------------------------------------------------

def baseline_ha(history: np.ndarray) -> np.ndarray:
    """Mean weekly count per location over the training history [weeks, L] (or [weeks])."""
    history = np.asarray(history, dtype=np.float64)
    if history.shape[0] == 0:
        raise ContractError("historical average needs at least one training week")
    return history.mean(axis=0)


def predict_ha(train: SampleSet, target: SampleSet) -> np.ndarray:
    """Historical average over the weeks whose targets the training split saw."""
    weeks = np.unique(train.t) + train.tau
    means = baseline_ha(train.y_panel[weeks])
    return means[target.d]


def baseline_persistence(y: np.ndarray, tau: int = 1) -> np.ndarray:
    """Predict y[t + tau] by y[t]; returns the len(y) - tau predictions along the first axis."""
    y = np.asarray(y, dtype=np.float64)
    if tau < 1:
        raise ContractError(f"lead time must be positive, got {tau}")
    return y[: len(y) - tau].copy()


def predict_persistence(target: SampleSet) -> np.ndarray:
    return target.last_observed()


def lstm_baseline_config(base: TrainConfig | None = None) -> TrainConfig:
    """Target-only recurrent model with static features: no global blocks, last hidden state."""
    cfg = TrainConfig.from_dict((base or TrainConfig()).to_dict())
    cfg.K, cfg.no_ta, cfg.no_sc = 0, True, False
    return cfg


# -- interpretability ------------------------------------------------------------

def export_memberships(trace: AttentionTrace) -> np.ndarray:
    """[K, L] spatial weights averaged over window steps and samples."""
    if trace.alpha.size == 0:
        return np.zeros((0, 0))
    return trace.alpha.mean(axis=(0, 2))


def export_contributions(trace: AttentionTrace, locations, L: int) -> np.ndarray:
    """[L, K] community weights averaged over the samples of each target location."""
    gamma = trace.gamma
    locations = np.asarray(locations).reshape(-1)
    out = np.full((L, gamma.shape[1]), np.nan)
    for d in range(L):
        m = locations == d
        if m.any():
            out[d] = gamma[m].mean(axis=0)
    return out


def explain(params: dict[str, Tensor], config: ModelConfig, samples: SampleSet) -> tuple[np.ndarray, np.ndarray]:
    _, trace = predict_set(params, config, samples, with_trace=True)
    return export_memberships(trace), export_contributions(trace, samples.d, config.L)


@dataclass
class FeatureImportance:
    local: np.ndarray  # [n]
    global_: np.ndarray  # [K, n]
    static: np.ndarray  # [n_static], empty without the static latent
    dynamic_features: list[str] = field(default_factory=list)
    static_features: list[str] = field(default_factory=list)

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for j, name in enumerate(self.dynamic_features or range(len(self.local))):
            out.append({"component": "local", "feature": name, "importance": float(self.local[j])})
        for k, row in enumerate(self.global_):
            for j, name in enumerate(self.dynamic_features or range(len(row))):
                out.append({"component": community_prefix(k), "feature": name, "importance": float(row[j])})
        for j, name in enumerate(self.static_features or range(len(self.static))):
            out.append({"component": "static", "feature": name, "importance": float(self.static[j])})
        return out


def _row_importance(W: np.ndarray) -> np.ndarray:
    return np.abs(W).mean(axis=1)


def export_feature_importance(params: dict[str, Tensor], config: ModelConfig,
                              dynamic_features: Sequence[str] = (),
                              static_features: Sequence[str] = ()) -> FeatureImportance:
    """Mean |w| of each input feature's row in the penalized input matrices.

    With locations concatenated instead of attended, a global block's input
    rows are location-major; they are averaged per feature.
    """
    mats = {k: v.data for k, v in group_matrices(params, config).items()}
    local = _row_importance(mats["local.lstm.W_input"])
    glob = []
    for k in range(config.K):
        imp = _row_importance(mats[f"{community_prefix(k)}.lstm.W_input"])
        if config.no_sa:
            imp = imp.reshape(config.L, config.n).mean(axis=0)
        glob.append(imp)
    glob = np.array(glob).reshape(config.K, config.n)
    static = _row_importance(mats["static.fc.W"]) if "static.fc.W" in mats else np.zeros(0)
    return FeatureImportance(local, glob, static, list(dynamic_features), list(static_features))


# -- CSV output ------------------------------------------------------------------

def write_matrix_csv(path: str | Path, matrix: np.ndarray, row_names: Sequence[str],
                     col_names: Sequence[str], corner: str = "") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([corner, *col_names])
        for name, row in zip(row_names, matrix):
            w.writerow([name, *(repr(float(x)) for x in row)])


def write_rows_csv(path: str | Path, rows: list[dict[str, Any]], columns: Sequence[str] | None = None) -> None:
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def community_names(K: int) -> list[str]:
    return [community_prefix(k).split(".")[-1] for k in range(K)]
