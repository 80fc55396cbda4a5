"""Cutting a panel into standardized (window, target) samples."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, ContractError
from .panel import PanelDataset


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.75
    val: float = 0.10
    test: float = 0.15
    gap: int = 0  # t-values dropped between consecutive splits

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 0 or abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be non-negative and sum to 1, got {self}")

    def sizes(self, count: int) -> tuple[int, int, int]:
        n_train = math.floor(self.train * count + 1e-9)
        n_val = math.floor(self.val * count + 1e-9)
        return n_train, n_val, count - n_train - n_val


@dataclass
class Standardization:
    dyn_mean: np.ndarray
    dyn_std: np.ndarray
    stat_mean: np.ndarray
    stat_std: np.ndarray

    def to_dict(self) -> dict[str, list[float]]:
        return {k: v.tolist() for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d) -> "Standardization":
        return cls(**{k: np.asarray(v, dtype=np.float64) for k, v in d.items()})


def _moments(x: np.ndarray, axis) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=axis)
    std = x.std(axis=axis)
    flat = np.ptp(x, axis=axis) == 0
    # constant columns: exact centre and unit scale, so they standardize to 0
    first = x.reshape(-1, x.shape[-1])[0] if x.size else mean
    mean = np.where(flat, first, mean)
    std = np.where(flat | (std == 0), 1.0, std)
    return mean, std


def fit_standardization(panel: PanelDataset, last_train_week: int) -> Standardization:
    dyn = panel.x_dyn[: last_train_week + 1].reshape(-1, panel.n)
    dm, ds = _moments(dyn, axis=0)
    if panel.n_static:
        sm, ss = _moments(panel.x_stat, axis=0)
    else:
        sm, ss = np.zeros(0), np.ones(0)
    return Standardization(dm, ds, sm, ss)


@dataclass
class Sample:
    global_window: np.ndarray  # [w, L, n]
    local_window: np.ndarray  # [w, n]
    static: np.ndarray  # [n_s]
    location_onehot: np.ndarray  # [L]
    proximity: np.ndarray  # [L]
    target: float
    t: int
    d: int


@dataclass
class Batch:
    """Samples grouped so each distinct observation window is stored once."""

    windows: np.ndarray  # [U, w, L, n]
    window_index: np.ndarray  # [B] -> row of windows
    local: np.ndarray  # [B, w, n]
    static: np.ndarray  # [B, n_s]
    location_onehot: np.ndarray  # [B, L]
    proximity: np.ndarray  # [B, L]
    y: np.ndarray  # [B]
    t: np.ndarray  # [B]
    d: np.ndarray  # [B]

    def __len__(self) -> int:
        return len(self.y)

    @property
    def locations(self) -> np.ndarray:
        return self.d

    @classmethod
    def from_samples(cls, samples: list[Sample]) -> "Batch":
        if not samples:
            raise ContractError("cannot batch zero samples")
        onehot = np.stack([s.location_onehot for s in samples])
        check_onehot(onehot)
        return cls(
            windows=np.stack([s.global_window for s in samples]),
            window_index=np.arange(len(samples)),
            local=np.stack([s.local_window for s in samples]),
            static=np.stack([s.static for s in samples]),
            location_onehot=onehot,
            proximity=np.stack([s.proximity for s in samples]),
            y=np.array([s.target for s in samples], dtype=np.float64),
            t=np.array([s.t for s in samples]),
            d=onehot.argmax(axis=1),
        )


def check_onehot(onehot: np.ndarray) -> None:
    ok = np.all((onehot == 0) | (onehot == 1), axis=-1) & (onehot.sum(axis=-1) == 1)
    if not np.all(ok):
        raise ContractError("location vector must contain exactly one 1 and zeros elsewhere")


class SampleSet:
    """All (t, d) samples of one split over a shared standardized panel."""

    def __init__(self, z_dyn: np.ndarray, z_stat: np.ndarray, y: np.ndarray, proximity: np.ndarray,
                 times: np.ndarray, w: int, tau: int, windows: np.ndarray | None = None):
        self.z_dyn, self.z_stat, self.y_panel, self.proximity = z_dyn, z_stat, y, proximity
        self.w, self.tau = w, tau
        T, L, _ = z_dyn.shape
        self.L = L
        self.times = np.asarray(times, dtype=np.int64)
        self.t = np.repeat(self.times, L)
        self.d = np.tile(np.arange(L), len(self.times))
        if windows is None:
            # [T-w+1, w, L, n], row i is the window ending at week i+w-1
            windows = np.ascontiguousarray(sliding_window_view(z_dyn, w, axis=0).transpose(0, 3, 1, 2))
        self._windows = windows

    def __len__(self) -> int:
        return len(self.t)

    @property
    def targets(self) -> np.ndarray:
        return self.y_panel[self.t + self.tau, self.d]

    def last_observed(self) -> np.ndarray:
        """Raw target counts in the final week of each window (for persistence)."""
        return self.y_panel[self.t, self.d]

    def __getitem__(self, i: int) -> Sample:
        t, d = int(self.t[i]), int(self.d[i])
        win = self._windows[t - self.w + 1]
        onehot = np.zeros(self.L)
        onehot[d] = 1.0
        return Sample(win, win[:, d, :], self.z_stat[d], onehot, self.proximity[d],
                      float(self.y_panel[t + self.tau, d]), t, d)

    def batch(self, idx: np.ndarray) -> Batch:
        idx = np.asarray(idx)
        t, d = self.t[idx], self.d[idx]
        uniq, inverse = np.unique(t, return_inverse=True)
        rows = t - self.w + 1
        onehot = np.zeros((len(idx), self.L))
        onehot[np.arange(len(idx)), d] = 1.0
        return Batch(
            windows=self._windows[uniq - self.w + 1],
            window_index=inverse.reshape(-1),
            local=self._windows[rows, :, d, :],
            static=self.z_stat[d],
            location_onehot=onehot,
            proximity=self.proximity[d],
            y=self.y_panel[t + self.tau, d],
            t=t,
            d=d,
        )

    def batches(self, batch_size: int, rng: np.random.Generator | None = None,
                group_by_time: bool = True) -> Iterator[Batch]:
        """Mini-batches; shuffled when ``rng`` is given.

        With ``group_by_time`` a batch is made of whole weeks (all locations of
        each drawn week), so the shared global window is encoded once per week.
        """
        if len(self) == 0:
            return
        if not group_by_time:
            order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
            for start in range(0, len(order), batch_size):
                yield self.batch(order[start:start + batch_size])
            return
        weeks = rng.permutation(len(self.times)) if rng is not None else np.arange(len(self.times))
        per_batch = max(1, batch_size // self.L)
        for start in range(0, len(weeks), per_batch):
            chosen = weeks[start:start + per_batch]
            idx = (chosen[:, None] * self.L + np.arange(self.L)[None, :]).reshape(-1)
            yield self.batch(idx)


@dataclass
class SampleSplits:
    train: SampleSet
    val: SampleSet
    test: SampleSet
    stats: Standardization
    w: int
    tau: int


def make_samples(panel: PanelDataset, w: int = 10, tau: int = 1, split: SplitSpec | None = None) -> SampleSplits:
    """Chronological train/val/test samples with train-only z-scoring.

    A sample exists for every window end t in [w-1, T-tau-1] and every
    location; its target is the raw count y[t+tau, d].
    """
    split = split or SplitSpec()
    T = panel.T
    if w < 1 or tau < 1:
        raise ConfigError(f"window and lead time must be positive, got w={w}, tau={tau}")
    if T < w + tau:
        raise ConfigError(f"panel has {T} weeks, needs at least w + tau = {w + tau}")
    times = np.arange(w - 1, T - tau)
    n_train, n_val, _ = split.sizes(len(times))
    tr = times[:n_train]
    va = times[n_train + split.gap: n_train + n_val]
    te = times[n_train + n_val + split.gap:]
    if len(tr) == 0:
        raise ConfigError("training split is empty")

    stats = fit_standardization(panel, int(tr[-1]))
    z_dyn = (panel.x_dyn - stats.dyn_mean) / stats.dyn_std
    z_stat = (panel.x_stat - stats.stat_mean) / stats.stat_std if panel.n_static else panel.x_stat.copy()
    y = panel.y.astype(np.float64)
    shared = np.ascontiguousarray(sliding_window_view(z_dyn, w, axis=0).transpose(0, 3, 1, 2))

    def subset(ts):
        return SampleSet(z_dyn, z_stat, y, panel.proximity, ts, w, tau, windows=shared)

    return SampleSplits(subset(tr), subset(va), subset(te), stats, w, tau)
