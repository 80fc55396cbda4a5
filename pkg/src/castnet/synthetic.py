"""Synthetic panels with planted communities, lag effects and irrelevant features.

Each location belongs to one planted community. Members of a community share
a latent activity level (AR(1) in log space) that drives their informative
feature counts, and they carry an elevated rate in one "signature" column, an
irrelevant feature, so membership is visible from a location's features.

The target of location d mixes two kernel-weighted sums of lagged
informative counts: a ``self_weight`` share from d's own counts, and the rest
from community-pooled counts weighted by ``contribution_map`` (a
``source_share`` on d's source community, the remainder spread evenly). Each
community acts through its own lag kernel, so the communities are
distinguishable by timing as well as by membership. Irrelevant columns never
enter the targets. Setting ``self_weight=0, source_share=1`` gives targets
driven by the source community alone.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Any

import numpy as np

from .data.geo import proximity_matrix
from .data.panel import PanelDataset
from .errors import ConfigError, ContractError

START = date(2015, 8, 3)  # a Monday


@dataclass
class SynthSpec:
    L: int = 12
    T: int = 200
    n: int = 6
    n_static: int = 9
    K: int = 3
    assignment: list[int] | None = None  # community of each location
    source: list[int] | None = None  # community whose dynamics drive each location's target
    informative: list[int] = field(default_factory=lambda: [0, 1])
    # kernel[c][j][lag-1]: weight of informative feature informative[j] at that lag,
    # for targets sourced from community c
    kernel: list[list[list[float]]] | None = None
    lags: int = 6
    kernel_scale: float = 0.3
    kernel_width: float = 1.0
    base_rate: float = 4.0
    activity_sd: float = 0.9
    activity_persistence: float = 0.6
    log_activity: bool = True
    irrelevant_rate: float = 3.0
    signature_rate: float = 30.0  # rate of each community's marker column (an irrelevant feature)
    self_weight: float = 0.5  # share of each target driven by the location's own counts
    source_share: float = 0.0  # of the community part, share from the source community (rest split evenly)
    noise: float = 0.2
    seed: int = 0

    def resolved(self) -> "SynthSpec":
        """Copy with defaults filled in and checked."""
        spec = SynthSpec(**asdict(self))
        if spec.assignment is None:
            spec.assignment = [l * spec.K // spec.L for l in range(spec.L)]
        if spec.source is None:
            spec.source = [(c + 1) % spec.K if spec.K > 1 else 0 for c in spec.assignment]
        if spec.kernel is None:
            spec.kernel = default_kernel(spec.K, len(spec.informative), spec.lags, spec.kernel_scale, spec.kernel_width)
        spec.validate()
        return spec

    def validate(self) -> None:
        if self.K < 1 or self.L < self.K:
            raise ConfigError(f"need 1 <= K <= L, got K={self.K}, L={self.L}")
        if sorted(set(self.assignment)) != list(range(self.K)) or len(self.assignment) != self.L:
            raise ConfigError("assignment must label every location and use every community")
        if len(self.source) != self.L or not all(0 <= s < self.K for s in self.source):
            raise ConfigError("source must name a community for every location")
        if not self.informative or not all(0 <= j < self.n for j in self.informative):
            raise ConfigError("informative features must be valid column indices")
        if len(set(self.informative)) != len(self.informative):
            raise ConfigError("informative features repeat")
        k = np.asarray(self.kernel, dtype=np.float64)
        if k.ndim != 3 or k.shape[:2] != (self.K, len(self.informative)):
            raise ConfigError(f"kernel must be [K][n_informative][lags], got shape {k.shape}")
        if (k < 0).any():
            raise ConfigError("kernel weights must be non-negative")
        for name in ("self_weight", "source_share"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError("noise must lie in [0, 1]")
        if min(self.base_rate, self.irrelevant_rate, self.signature_rate) < 0:
            raise ConfigError("rates must be non-negative")
        if self.T <= k.shape[2]:
            raise ConfigError("series shorter than the kernel")

    @property
    def irrelevant(self) -> list[int]:
        return [j for j in range(self.n) if j not in self.informative]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        return cls(**json.loads(Path(path).read_text()))


@dataclass
class GroundTruth:
    membership: np.ndarray  # [K, L], rows uniform over members
    contribution: np.ndarray  # [L, K], share of each community in each target
    informative_mask: np.ndarray  # [n] bool

    def to_dict(self) -> dict[str, Any]:
        return {"membership": self.membership.tolist(), "contribution": self.contribution.tolist(),
                "informative_mask": self.informative_mask.astype(bool).tolist()}

    @classmethod
    def from_dict(cls, d) -> "GroundTruth":
        return cls(np.asarray(d["membership"], dtype=np.float64), np.asarray(d["contribution"], dtype=np.float64),
                   np.asarray(d["informative_mask"], dtype=bool))


def default_kernel(K: int, n_inf: int, lags: int, scale: float, width: float = 1.0) -> list[list[list[float]]]:
    """Community c acts through every informative feature, peaking at a lag that grows with c."""
    kernel = np.zeros((K, n_inf, lags))
    lag = np.arange(1, lags + 1)
    for c in range(K):
        peak = 1 + c * (lags - 1) / max(K - 1, 1)
        bump = np.exp(-0.5 * ((lag - peak) / width) ** 2)
        kernel[c, :] = bump / bump.sum() * scale
    return kernel.tolist()


def contribution_map(spec: SynthSpec) -> np.ndarray:
    """[L, K] weight of each community's pooled drive in each location's target; rows sum to 1."""
    spec = spec.resolved()
    C = np.full((spec.L, spec.K), (1.0 - spec.source_share) / spec.K)
    C[np.arange(spec.L), spec.source] += spec.source_share
    return C


def _lagged(series: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Kernel-weighted lags of series [T, ..., n_inf] with kernel [n_inf, lags]; first lags rows NaN."""
    lags = kernel.shape[1]
    out = np.zeros(series.shape[:-1])
    for lag in range(1, lags + 1):
        out[lag:] += series[:-lag] @ kernel[:, lag - 1]
    out[:lags] = np.nan
    return out


def planted_signal(x_dyn: np.ndarray, spec: SynthSpec) -> np.ndarray:
    """Noise-free target intensity s[t, d] implied by the kernel (NaN where lags run off the start).

    A share ``self_weight`` comes from the location's own informative counts,
    scaled up to community size; the rest from the pooled counts of its
    source community.
    """
    spec = spec.resolved()
    kernel = np.asarray(spec.kernel, dtype=np.float64)
    members = np.asarray(spec.assignment)
    sizes = np.bincount(members, minlength=spec.K)
    inf = x_dyn[:, :, spec.informative]
    drive = np.stack([_lagged(inf[:, members == c].sum(axis=1), kernel[c]) for c in range(spec.K)], axis=1)
    own = np.stack([_lagged(inf[:, d] * sizes[members[d]], kernel[members[d]])
                    for d in range(spec.L)], axis=1)
    return spec.self_weight * own + (1.0 - spec.self_weight) * drive @ contribution_map(spec).T


def generate(spec: SynthSpec) -> tuple[PanelDataset, GroundTruth]:
    spec = spec.resolved()
    rng = np.random.default_rng(spec.seed)
    L, T_, n, K = spec.L, spec.T, spec.n, spec.K
    members = np.asarray(spec.assignment)

    # latent community activity: stationary AR(1) in log space
    phi, sd = spec.activity_persistence, spec.activity_sd
    act = np.zeros((T_, K))
    act[0] = rng.normal(0.0, sd, K)
    for t in range(1, T_):
        act[t] = phi * act[t - 1] + rng.normal(0.0, sd * np.sqrt(1.0 - phi ** 2), K)

    rates = np.full((T_, L, n), spec.irrelevant_rate)
    if spec.log_activity:
        level = spec.base_rate * np.exp(act - sd ** 2 / 2.0)  # [T, K]
    else:
        level = spec.base_rate * np.maximum(0.1, 1.0 + act)
    for j in spec.informative:
        rates[:, :, j] = level[:, members]
    irrelevant = spec.irrelevant
    if irrelevant:
        for l in range(L):
            rates[:, l, irrelevant[members[l] % len(irrelevant)]] = spec.signature_rate
    x_dyn = rng.poisson(rates).astype(np.float64)

    signal = planted_signal(x_dyn, spec)
    lags = len(spec.kernel[0][0])
    y = np.zeros((T_, L))
    s = signal[lags:]
    noisy = rng.poisson(spec.noise * s)
    y[lags:] = np.round((1.0 - spec.noise) * s) + noisy
    # burn-in weeks before the kernel is fully observed: pure noise around the mean
    y[:lags] = rng.poisson(np.nanmean(signal), size=(lags, L))

    # static features: unrelated draws, one row per location
    x_stat = rng.normal(0.0, 1.0, size=(L, spec.n_static))
    # communities sit in separate corners of a ~10 km box
    centres = rng.uniform(-0.04, 0.04, size=(K, 2))
    coords = np.array([41.85, -87.65]) + centres[members] + rng.normal(0, 0.01, size=(L, 2))

    panel = PanelDataset(
        x_dyn=x_dyn, x_stat=x_stat, y=y,
        proximity=proximity_matrix(coords),
        dynamic_features=[f"{'inf' if j in spec.informative else 'irr'}_{j}" for j in range(n)],
        static_features=[f"static_{i}" for i in range(spec.n_static)],
        neighborhoods=[f"loc{l:02d}" for l in range(L)],
        week_starts=[(START + timedelta(weeks=t)).isoformat() for t in range(T_)],
        coords=coords,
        target_feature=None,
        meta={"synthetic": spec.to_dict(), "distance_unit": "km"},
    )
    return panel, ground_truth(spec)


def ground_truth(spec: SynthSpec) -> GroundTruth:
    spec = spec.resolved()
    members = np.asarray(spec.assignment)
    mem = np.zeros((spec.K, spec.L))
    for c in range(spec.K):
        mem[c, members == c] = 1.0 / np.sum(members == c)
    contrib = contribution_map(spec)
    mask = np.zeros(spec.n, dtype=bool)
    mask[spec.informative] = True
    return GroundTruth(mem, contrib, mask)


def _cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = np.where((na > 0) & (nb > 0), na * nb, 1.0)
    return np.where((na > 0) & (nb > 0), (a * b).sum(axis=1) / denom, 0.0)


def score_recovery(membership: np.ndarray, truth: GroundTruth | np.ndarray) -> float:
    """Best mean row cosine between learned and planted memberships over row permutations."""
    target = truth.membership if isinstance(truth, GroundTruth) else np.asarray(truth, dtype=np.float64)
    membership = np.asarray(membership, dtype=np.float64)
    if membership.shape != target.shape:
        raise ContractError(f"membership shape {membership.shape} != planted shape {target.shape}")
    best = 0.0
    for perm in itertools.permutations(range(membership.shape[0])):
        best = max(best, float(_cosine_rows(membership[list(perm)], target).mean()))
    return best
