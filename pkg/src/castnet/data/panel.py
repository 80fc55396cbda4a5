"""Weekly per-neighborhood feature panels and their on-disk archive."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from ..errors import ConfigError, ContractError
from .geo import assign_neighborhood, proximity_matrix
from .ingest import Centroids, IncidentRecord, normalize_label

TOTAL_CRIMES = "TOTAL_CRIMES"
OVERDOSES = "OPIOID_OVERDOSES"

_ARRAYS = ("x_dyn", "x_stat", "y", "proximity", "coords")


@dataclass
class PanelDataset:
    """Aligned weekly dynamics, static features, targets and proximity.

    ``target_feature`` is the column of ``x_dyn`` that holds the overdose
    counts themselves (None when the panel has no such column).
    """

    x_dyn: np.ndarray  # [T, L, n]
    x_stat: np.ndarray  # [L, n_s]
    y: np.ndarray  # [T, L]
    proximity: np.ndarray  # [L, L]
    dynamic_features: list[str]
    static_features: list[str]
    neighborhoods: list[str]
    week_starts: list[str]
    coords: np.ndarray | None = None
    target_feature: int | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.x_dyn.shape[0]

    @property
    def L(self) -> int:
        return self.x_dyn.shape[1]

    @property
    def n(self) -> int:
        return self.x_dyn.shape[2]

    @property
    def n_static(self) -> int:
        return self.x_stat.shape[1]

    def validate(self) -> None:
        T, L, n = self.x_dyn.shape
        if self.y.shape != (T, L):
            raise ContractError(f"targets have shape {self.y.shape}, expected {(T, L)}")
        if self.x_stat.shape[0] != L or self.proximity.shape != (L, L):
            raise ContractError("static/proximity shapes disagree with the location count")
        if len(self.dynamic_features) != n or len(self.static_features) != self.x_stat.shape[1]:
            raise ContractError("feature name lists do not match array widths")
        if len(self.week_starts) != T or len(self.neighborhoods) != L:
            raise ContractError("week or neighborhood labels do not match array shapes")
        for name, arr in (("x_dyn", self.x_dyn), ("y", self.y)):
            if (arr < 0).any() or not np.array_equal(arr, np.round(arr)):
                raise ContractError(f"{name} must hold non-negative integer counts")
        if self.target_feature is not None and not np.array_equal(self.x_dyn[:, :, self.target_feature], self.y):
            raise ContractError("overdose feature column differs from the targets")
        P = self.proximity
        if not np.array_equal(P, P.T) or not np.all(np.diag(P) == 1.0) or (P <= 0).any() or (P > 1).any():
            raise ContractError("proximity must be symmetric with unit diagonal and entries in (0, 1]")

    def select(self, keep: list[str]) -> "PanelDataset":
        """Panel restricted to the given neighborhoods (ids or names), in that order."""
        ids = self.meta.get("neighborhood_ids", self.neighborhoods)
        lookup = {normalize_label(n): i for i, n in enumerate(self.neighborhoods)}
        lookup.update({normalize_label(str(x)): i for i, x in enumerate(ids)})
        try:
            rows = [lookup[normalize_label(k)] for k in keep]
        except KeyError as exc:
            raise ConfigError(f"neighborhood {exc.args[0]!r} is not in the panel") from None
        meta = dict(self.meta, neighborhood_ids=[ids[i] for i in rows])
        return PanelDataset(
            x_dyn=self.x_dyn[:, rows].copy(), x_stat=self.x_stat[rows].copy(), y=self.y[:, rows].copy(),
            proximity=self.proximity[np.ix_(rows, rows)].copy(), dynamic_features=list(self.dynamic_features),
            static_features=list(self.static_features), neighborhoods=[self.neighborhoods[i] for i in rows],
            week_starts=list(self.week_starts), coords=None if self.coords is None else self.coords[rows].copy(),
            target_feature=self.target_feature, meta=meta)

    def header(self) -> dict[str, Any]:
        return {
            "dynamic_features": self.dynamic_features,
            "static_features": self.static_features,
            "neighborhoods": self.neighborhoods,
            "week_starts": self.week_starts,
            "target_feature": self.target_feature,
            "meta": self.meta,
        }

    def fingerprint(self) -> str:
        """Content hash over arrays and header; identifies the data a model was fitted on."""
        h = hashlib.sha256()
        h.update(json.dumps(self.header(), sort_keys=True, default=str).encode())
        for name in _ARRAYS:
            arr = getattr(self, name)
            if arr is not None:
                h.update(name.encode())
                h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        header = self.header()
        header["fingerprint"] = self.fingerprint()
        arrays = {k: getattr(self, k) for k in _ARRAYS if getattr(self, k) is not None}
        with open(path, "wb") as fh:
            np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "PanelDataset":
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            arrays = {k: z[k] for k in _ARRAYS if k in z.files}
        header.pop("fingerprint", None)
        return cls(coords=arrays.pop("coords", None), **arrays, **header)


def stored_fingerprint(path: str | Path) -> str:
    with np.load(path, allow_pickle=False) as z:
        return json.loads(str(z["header"]))["fingerprint"]


def select_categories(records: Iterable[IncidentRecord], threshold: float = 0.01) -> list[str]:
    """Categories holding at least ``threshold`` of all records, most frequent first."""
    counts = Counter(r.category for r in records)
    total = sum(counts.values())
    if total == 0:
        return []
    keep = [(c, k) for c, k in counts.items() if k / total >= threshold]
    return [c for c, _ in sorted(keep, key=lambda ck: (-ck[1], ck[0]))]


@dataclass
class BuildReport:
    placed: int = 0
    out_of_range: int = 0
    unmatched_label: int = 0
    outside_bbox: int = 0

    def to_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


def _locate(records, centroids: Centroids, week0: date, T: int, bbox, unit, report: BuildReport):
    """Yield (week, location, record) for records that land inside the panel."""
    lookup = centroids.label_index()
    for r in records:
        week = (r.date - week0).days // 7
        if week < 0 or week >= T:
            report.out_of_range += 1
            continue
        if r.neighborhood is not None:
            loc = lookup.get(normalize_label(r.neighborhood))
            if loc is None:
                report.unmatched_label += 1
                continue
        else:
            loc = assign_neighborhood(r.lat, r.lon, centroids.latlon, bbox=bbox, unit=unit)
            if loc is None:
                report.outside_bbox += 1
                continue
        report.placed += 1
        yield week, loc, r


def build_panel(records: list[IncidentRecord], overdose_records: list[IncidentRecord],
                centroids: Centroids, week0: date, *, n_weeks: int | None = None,
                categories: list[str] | None = None, rare_threshold: float = 0.01,
                static: tuple[np.ndarray, list[str]] | None = None,
                bbox: tuple[float, float, float, float] | None = None,
                unit: str = "km") -> tuple[PanelDataset, dict[str, Any]]:
    """Aggregate records into Monday-start weekly counts per neighborhood.

    Dynamic columns are one count per kept crime category, then the total
    crime count (all placed crimes, rare categories included), then the
    overdose count, which also forms the target matrix.
    """
    if week0.weekday() != 0:
        raise ConfigError(f"week0 {week0.isoformat()} is not a Monday")
    if n_weeks is None:
        last = max((r.date for r in list(records) + list(overdose_records)), default=week0)
        n_weeks = (last - week0).days // 7 + 1
    T, L = n_weeks, len(centroids)
    if T < 1:
        raise ConfigError("panel needs at least one week")
    if categories is None:
        categories = select_categories(records, rare_threshold)
    cat_index = {c: i for i, c in enumerate(categories)}
    n = len(categories) + 2
    x_dyn = np.zeros((T, L, n))
    y = np.zeros((T, L))

    crime_report, od_report = BuildReport(), BuildReport()
    for week, loc, r in _locate(records, centroids, week0, T, bbox, unit, crime_report):
        j = cat_index.get(r.category)
        if j is not None:
            x_dyn[week, loc, j] += 1
        x_dyn[week, loc, n - 2] += 1
    for week, loc, _ in _locate(overdose_records, centroids, week0, T, bbox, unit, od_report):
        y[week, loc] += 1
    x_dyn[:, :, n - 1] = y

    if static is None:
        x_stat, stat_names = np.zeros((L, 0)), []
    else:
        x_stat, stat_names = np.asarray(static[0], dtype=np.float64), list(static[1])

    panel = PanelDataset(
        x_dyn=x_dyn, x_stat=x_stat, y=y,
        proximity=proximity_matrix(centroids.latlon, unit),
        dynamic_features=list(categories) + [TOTAL_CRIMES, OVERDOSES],
        static_features=stat_names,
        neighborhoods=list(centroids.names),
        week_starts=[(week0 + timedelta(weeks=t)).isoformat() for t in range(T)],
        coords=centroids.latlon.copy(),
        target_feature=n - 1,
        meta={"distance_unit": unit, "week0": week0.isoformat(), "rare_threshold": rare_threshold,
              "neighborhood_ids": list(centroids.ids)},
    )
    reports = {"crimes": crime_report.to_dict(), "overdoses": od_report.to_dict()}
    panel.meta["build_report"] = reports
    return panel, reports
