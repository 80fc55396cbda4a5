"""Composite objective, training loop and grid search."""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterable

import numpy as np

from . import tensor as T
from .data.samples import Batch, SampleSet, SampleSplits
from .errors import ConfigError, ContractError, NumericError
from .model import AttentionTrace, ModelConfig, forward, group_matrices, init_params
from .optim import Adam
from .tensor import Tensor

log = logging.getLogger(__name__)

LAMBDA_GRID = (0.001, 0.005, 0.01, 0.05)
ETA_GRID = tuple(round(0.001 + 0.0005 * i, 4) for i in range(19))
WINDOW_GRID = (5, 10, 15, 20)


def mse_loss(yhat, y) -> Tensor:
    yhat = T.as_tensor(yhat)
    y = np.asarray(y, dtype=np.float64)
    if yhat.shape != y.shape:
        raise ContractError(f"prediction shape {yhat.shape} != target shape {y.shape}")
    if y.size == 0:
        raise ContractError("mean squared error of zero samples")
    r = yhat - y
    return T.mean(r * r)


def membership(alpha) -> Tensor:
    """Time-averaged spatial weights: [..., K, w, L] -> [..., K, L]."""
    return T.mean(T.as_tensor(alpha), axis=-2)


def ortho_loss(delta) -> Tensor:
    """||D D^T - I||_F^2 for membership matrices D [..., K, L]; one value per leading index."""
    delta = T.as_tensor(delta)
    K = delta.shape[-2]
    if K == 0:
        return T.Tensor(np.zeros(delta.shape[:-2]))
    gram = T.matmul(delta, T.transpose(delta, tuple(range(delta.ndim - 2)) + (delta.ndim - 1, delta.ndim - 2)))
    diff = gram - np.eye(K)
    return T.sum(diff * diff, axis=(-2, -1))


def l21_norm(Z) -> Tensor:
    """sum over columns g of sqrt(|g|) * ||g||_2, for Z laid out [outputs x inputs]."""
    Z = T.as_tensor(Z)
    return T.sum(T.l2_norm(Z, axis=0)) * float(np.sqrt(Z.shape[0]))


def group_lasso(matrices: Iterable) -> Tensor:
    """Sum of l21 norms; each matrix groups weights by input column."""
    total = None
    for Z in matrices:
        term = l21_norm(Z)
        total = term if total is None else total + term
    return total if total is not None else T.Tensor(0.0)


def model_group_lasso(params: dict[str, Tensor], config: ModelConfig) -> Tensor:
    # parameters are stored [inputs x outputs]; transpose so inputs are columns
    return group_lasso(T.transpose(Z) for Z in group_matrices(params, config).values())


@dataclass
class LossParts:
    total: Tensor
    mse: float
    ortho: float
    gl: float


def total_loss(out, batch: Batch, params: dict[str, Tensor], config: ModelConfig,
               lam: float, eta: float) -> LossParts:
    """MSE + lam * mean per-sample ortho + eta * group lasso."""
    if len(batch) == 0:
        raise ContractError("empty batch")
    mse = mse_loss(out.yhat, batch.y)
    total = mse
    ortho_v = gl_v = 0.0
    if config.K and out.alpha is not None:
        per_window = ortho_loss(membership(out.alpha))
        counts = np.bincount(batch.window_index, minlength=per_window.shape[0]) / len(batch)
        ortho = T.sum(per_window * counts)
        ortho_v = ortho.item()
        if lam:
            total = total + ortho * lam
    if eta:
        gl = model_group_lasso(params, config)
        gl_v = gl.item()
        total = total + gl * eta
    else:
        with T.no_grad():
            gl_v = model_group_lasso(params, config).item()
    return LossParts(total, mse.item(), ortho_v, gl_v)


@dataclass
class TrainConfig:
    w: int = 10
    tau: int = 1
    K: int = 3
    hidden: int = 16
    local_hidden: int = 16
    static_latent: int = 8
    lam: float = 0.01
    eta: float = 0.001
    lr: float = 0.001
    epochs: int = 200
    patience: int = 15
    batch_size: int = 64
    seed: int = 0
    dropout: float = 0.1
    no_gl: bool = False
    no_ortho: bool = False
    no_sa: bool = False
    no_ta: bool = False
    no_ca: bool = False
    no_sc: bool = False

    @property
    def effective_lam(self) -> float:
        return 0.0 if self.no_ortho else self.lam

    @property
    def effective_eta(self) -> float:
        return 0.0 if self.no_gl else self.eta

    def model_config(self, L: int, n: int, n_static: int) -> ModelConfig:
        return ModelConfig(L=L, n=n, n_static=n_static, w=self.w, K=self.K, hidden=self.hidden,
                           local_hidden=self.local_hidden, static_latent=self.static_latent,
                           dropout=self.dropout, no_sa=self.no_sa, no_ta=self.no_ta,
                           no_ca=self.no_ca, no_sc=self.no_sc)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training option(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochStats:
    epoch: int
    mse: float
    ortho: float
    gl: float
    total: float
    val_mse: float
    val_mae: float


@dataclass
class TrainReport:
    config: dict[str, Any]
    model: dict[str, Any]
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_mse: float = float("inf")
    best_val_mae: float = float("inf")
    status: str = "ok"
    message: str = ""
    panel_fingerprint: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def loss_curve_rows(self) -> list[dict[str, float]]:
        return [{"epoch": e.epoch, "mse": e.mse, "ortho": e.ortho, "gl": e.gl, "val_mse": e.val_mse}
                for e in self.epochs]


class DivergenceError(NumericError):
    """Training produced a non-finite loss; carries the last finite state."""

    def __init__(self, message: str, report: TrainReport, params: dict[str, Tensor]):
        super().__init__(message)
        self.report = report
        self.params = params


def predict_set(params: dict[str, Tensor], config: ModelConfig, samples: SampleSet,
                batch_size: int = 512, with_trace: bool = False):
    """Eval-mode predictions for every sample in order; optionally the stacked traces."""
    preds, traces = [], []
    with T.no_grad():
        for batch in samples.batches(batch_size):
            out = forward(params, config, batch, train=False)
            preds.append(out.yhat.data)
            if with_trace:
                traces.append(out.trace())
    yhat = np.concatenate(preds) if preds else np.zeros(0)
    if not with_trace:
        return yhat
    trace = AttentionTrace(*(np.concatenate([getattr(t, f) for t in traces]) if traces else np.zeros(0)
                             for f in ("alpha", "beta", "delta", "gamma")))
    return yhat, trace


def _snapshot(params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {k: T.parameter(p.data.copy()) for k, p in params.items()}


@dataclass
class TrainResult:
    report: TrainReport
    params: dict[str, Tensor]
    model_config: ModelConfig


def train(train_set: SampleSet, val_set: SampleSet, config: TrainConfig, *,
          n: int | None = None, n_static: int | None = None,
          init: dict[str, Tensor] | None = None) -> TrainResult:
    """Mini-batch Adam with best-validation checkpointing and early stopping."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ContractError("train and validation splits must be non-empty")
    n = n if n is not None else train_set.z_dyn.shape[2]
    n_static = n_static if n_static is not None else train_set.z_stat.shape[1]
    mcfg = config.model_config(train_set.L, n, n_static)
    rng = np.random.default_rng(config.seed)
    if init is None:
        params = init_params(mcfg, rng)
        # start the output at the mean count instead of 0
        params["head.b"].data[:] = train_set.targets.mean()
    else:
        params = init
    opt = Adam(params, lr=config.lr)
    lam, eta = config.effective_lam, config.effective_eta
    report = TrainReport(config=config.to_dict(), model=mcfg.to_dict())
    best = _snapshot(params)
    y_val = val_set.targets
    stale = 0

    for epoch in range(config.epochs):
        sums = np.zeros(4)
        count = 0
        for batch in train_set.batches(config.batch_size, rng):
            opt.zero_grad()
            out = forward(params, mcfg, batch, train=True, rng=rng)
            parts = total_loss(out, batch, params, mcfg, lam, eta)
            value = parts.total.item()
            if not np.isfinite(value):
                report.status = "diverged"
                report.message = f"non-finite loss at epoch {epoch}; kept epoch {report.best_epoch}"
                raise DivergenceError(report.message, report, best)
            parts.total.backward()
            opt.step()
            w = len(batch)
            sums += w * np.array([parts.mse, parts.ortho, parts.gl, value])
            count += w
        mse, ortho, gl, total = sums / count
        yhat = predict_set(params, mcfg, val_set)
        val_mse = float(np.mean((yhat - y_val) ** 2))
        val_mae = float(np.mean(np.abs(yhat - y_val)))
        report.epochs.append(EpochStats(epoch, float(mse), float(ortho), float(gl), float(total), val_mse, val_mae))
        if val_mse < report.best_val_mse:
            report.best_val_mse, report.best_val_mae, report.best_epoch = val_mse, val_mae, epoch
            best = _snapshot(params)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
        log.debug("epoch %d mse=%.4f val_mse=%.4f val_mae=%.4f", epoch, mse, val_mse, val_mae)
    return TrainResult(report, best, mcfg)


def expand_space(base: TrainConfig, space: dict[str, list[Any]]) -> list[TrainConfig]:
    """Cartesian product of option lists applied on top of ``base``."""
    if not space:
        return [base]
    keys = sorted(space)
    for k in keys:
        if k not in TrainConfig.__dataclass_fields__:
            raise ConfigError(f"unknown grid dimension {k!r}")
    return [replace(base, **dict(zip(keys, combo))) for combo in itertools.product(*(space[k] for k in keys))]


@dataclass
class GridEntry:
    config: TrainConfig
    result: TrainResult | None
    error: str | None = None

    @property
    def val_mae(self) -> float:
        return self.result.report.best_val_mae if self.result else float("inf")


def grid_search(splits: SampleSplits, base: TrainConfig, space: dict[str, list[Any]]) -> list[GridEntry]:
    """Train one model per combination; entries ranked by best validation MAE.

    ``w`` and ``tau`` are fixed by ``splits``; vary them by re-cutting samples.
    """
    entries = []
    for cfg in expand_space(base, space):
        if cfg.w != splits.w or cfg.tau != splits.tau:
            entries.append(GridEntry(cfg, None, f"samples were cut with w={splits.w}, tau={splits.tau}"))
            continue
        try:
            entries.append(GridEntry(cfg, train(splits.train, splits.val, cfg)))
        except Exception as exc:  # one failed cell must not stop the search
            log.warning("grid cell %s failed: %s", cfg, exc)
            entries.append(GridEntry(cfg, None, f"{type(exc).__name__}: {exc}"))
    return sorted(entries, key=lambda e: e.val_mae)


def k_sweep_rows(entries: list[GridEntry]) -> list[dict[str, Any]]:
    """Best validation MAE per K (the data behind a K-vs-error plot)."""
    best: dict[int, GridEntry] = {}
    for e in entries:
        if e.result is None:
            continue
        cur = best.get(e.config.K)
        if cur is None or e.val_mae < cur.val_mae:
            best[e.config.K] = e
    rows = []
    for K in sorted(best):
        r = best[K].result.report
        rows.append({"K": K, "val_mae": r.best_val_mae, "val_rmse": float(np.sqrt(r.best_val_mse)),
                     "best_epoch": r.best_epoch})
    return rows
