"""Reading incident, centroid and static-feature CSVs."""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import SchemaError

# Column roles for the portal exports named in the dataset descriptions.
# The Chicago layout is the public "Crimes - 2001 to present" export; the
# Cincinnati one is the PDI crime-incidents export grouped by UCR group.
SCHEMA_PRESETS: dict[str, dict[str, Any]] = {
    "chicago": {
        "timestamp": "Date",
        "timestamp_format": "%m/%d/%Y %I:%M:%S %p",
        "category": "Primary Type",
        "neighborhood": "Community Area",
        "latitude": "Latitude",
        "longitude": "Longitude",
    },
    "cincinnati": {
        "timestamp": "DATE_REPORTED",
        "timestamp_format": "%m/%d/%Y %I:%M:%S %p",
        "category": "UCR_GROUP",
        "neighborhood": "CPD_NEIGHBORHOOD",
        "latitude": "LATITUDE_X",
        "longitude": "LONGITUDE_X",
    },
}

STATIC_FEATURES = [
    "median_household_income",
    "per_capita_income",
    "poverty",
    "housing_occupancy",
    "housing_tenure",
    "education",
    "population",
    "gender_diversity",
    "race_diversity",
]

_SPACES = re.compile(r"\s+")


class IngestIOError(OSError):
    """The file exists but cannot be read as CSV."""


@dataclass(frozen=True, slots=True)
class IncidentRecord:
    """One raw event. Carries either a neighborhood label or a coordinate pair."""

    date: date
    category: str
    neighborhood: str | None = None
    lat: float | None = None
    lon: float | None = None

    def __post_init__(self):
        has_label = self.neighborhood is not None
        has_coords = self.lat is not None and self.lon is not None
        if has_label == has_coords:
            raise ValueError("record needs exactly one of a neighborhood label or lat/lon")


@dataclass
class IngestReport:
    rows: int = 0
    records: int = 0
    malformed: int = 0
    reasons: Counter = field(default_factory=Counter)
    examples: list[tuple[int, str]] = field(default_factory=list)

    def reject(self, line: int, reason: str) -> None:
        self.malformed += 1
        self.reasons[reason] += 1
        if len(self.examples) < 20:
            self.examples.append((line, reason))

    def to_dict(self) -> dict[str, Any]:
        return {"rows": self.rows, "records": self.records, "malformed": self.malformed,
                "reasons": dict(sorted(self.reasons.items())),
                "examples": [list(e) for e in self.examples]}


def normalize_category(value: str) -> str:
    return _SPACES.sub(" ", value.strip()).upper()


def normalize_label(value: str) -> str:
    """Trim/uppercase; numeric labels like '25.0' collapse to '25'."""
    v = _SPACES.sub(" ", value.strip()).upper()
    try:
        f = float(v)
    except ValueError:
        return v
    if f.is_integer():
        return str(int(f))
    return v


def load_schema(schema: str | Path | dict[str, Any]) -> dict[str, Any]:
    """Resolve a schema map given as a dict, a preset name, or a JSON file path."""
    if isinstance(schema, dict):
        return dict(schema)
    if str(schema) in SCHEMA_PRESETS:
        return dict(SCHEMA_PRESETS[str(schema)])
    return json.loads(Path(schema).read_text())


def parse_date(value: str, fmt: str | None = None) -> date:
    value = value.strip()
    if fmt:
        return datetime.strptime(value, fmt).date()
    if value.endswith("Z"):
        value = value[:-1]
    if len(value) == 10:
        return date.fromisoformat(value)
    return datetime.fromisoformat(value).date()


def ingest_incidents(path: str | Path, schema: str | Path | dict[str, Any],
                     default_category: str | None = None) -> tuple[list[IncidentRecord], IngestReport]:
    """Read an incident export into records.

    Rows that cannot be turned into a record are counted in the report with a
    reason, never silently skipped. ``default_category`` lets single-type
    files (overdose records) omit the category column.
    """
    smap = load_schema(schema)
    fmt = smap.get("timestamp_format")
    ts_col = smap.get("timestamp")
    cat_col = smap.get("category")
    nb_col = smap.get("neighborhood")
    lat_col, lon_col = smap.get("latitude"), smap.get("longitude")
    if not ts_col:
        raise SchemaError("schema map must name a timestamp column")
    if not cat_col and default_category is None:
        raise SchemaError("schema map must name a category column (or pass a default category)")
    if not nb_col and not (lat_col and lon_col):
        raise SchemaError("schema map must name a neighborhood column or both latitude and longitude")
    default_cat = normalize_category(default_category) if default_category is not None else None

    records: list[IncidentRecord] = []
    report = IngestReport()
    try:
        with open(path, newline="", encoding=smap.get("encoding", "utf-8-sig")) as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            wanted = [c for c in (ts_col, cat_col, nb_col, lat_col, lon_col) if c]
            missing = [c for c in wanted if c not in header]
            if missing:
                raise SchemaError(f"{path}: missing column(s) {missing}; header is {header}")
            date_cache: dict[str, date] = {}
            for row in reader:
                report.rows += 1
                line = reader.line_num
                if None in row or any(row[c] is None for c in wanted):
                    report.reject(line, "field_count")
                    continue
                raw_ts = row[ts_col]
                day = date_cache.get(raw_ts)
                if day is None:
                    try:
                        day = parse_date(raw_ts, fmt)
                    except ValueError:
                        report.reject(line, "timestamp")
                        continue
                    date_cache[raw_ts] = day
                if cat_col:
                    category = normalize_category(row[cat_col])
                    if not category:
                        report.reject(line, "category")
                        continue
                else:
                    category = default_cat
                label = normalize_label(row[nb_col]) if nb_col else ""
                if label:
                    records.append(IncidentRecord(day, category, neighborhood=label))
                    continue
                lat_s = row[lat_col].strip() if lat_col else ""
                lon_s = row[lon_col].strip() if lon_col else ""
                if not lat_s or not lon_s:
                    report.reject(line, "location")
                    continue
                try:
                    lat, lon = float(lat_s), float(lon_s)
                except ValueError:
                    report.reject(line, "coordinates")
                    continue
                if not (np.isfinite(lat) and np.isfinite(lon)):
                    report.reject(line, "coordinates")
                    continue
                records.append(IncidentRecord(day, category, lat=lat, lon=lon))
    except (csv.Error, UnicodeDecodeError) as exc:
        raise IngestIOError(f"cannot read {path} as CSV: {exc}") from exc
    report.records = len(records)
    return records, report


@dataclass
class Centroids:
    ids: list[str]
    names: list[str]
    latlon: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    def label_index(self) -> dict[str, int]:
        """Lookup from normalized id or name to row index (ids win on clashes)."""
        table = {normalize_label(n): i for i, n in enumerate(self.names)}
        table.update({normalize_label(x): i for i, x in enumerate(self.ids)})
        return table

    def subset(self, keep: list[str]) -> "Centroids":
        lookup = self.label_index()
        try:
            rows = [lookup[normalize_label(k)] for k in keep]
        except KeyError as exc:
            raise SchemaError(f"neighborhood whitelist entry {exc.args[0]!r} not in centroid table") from None
        return Centroids([self.ids[i] for i in rows], [self.names[i] for i in rows], self.latlon[rows])


def load_centroids(path: str | Path) -> Centroids:
    """CSV with columns neighborhood_id, name, lat, lon; row order fixes the index."""
    ids, names, coords = [], [], []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        need = {"neighborhood_id", "name", "lat", "lon"}
        if not need <= set(reader.fieldnames or []):
            raise SchemaError(f"{path}: centroid CSV needs columns {sorted(need)}")
        for row in reader:
            ids.append(row["neighborhood_id"].strip())
            names.append(row["name"].strip())
            coords.append((float(row["lat"]), float(row["lon"])))
    if not ids:
        raise SchemaError(f"{path}: no centroids")
    return Centroids(ids, names, np.asarray(coords, dtype=np.float64))


def load_static(path: str | Path, centroids: Centroids) -> tuple[np.ndarray, list[str]]:
    """Static-feature matrix aligned to centroid order. Every neighborhood must be present."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if "neighborhood_id" not in header:
            raise SchemaError(f"{path}: static CSV needs a neighborhood_id column")
        names = [h for h in header if h != "neighborhood_id"]
        if not names:
            raise SchemaError(f"{path}: static CSV has no feature columns")
        rows = {normalize_label(r["neighborhood_id"]): r for r in reader}
    out = np.zeros((len(centroids), len(names)))
    for i, nid in enumerate(centroids.ids):
        row = rows.get(normalize_label(nid))
        if row is None:
            raise SchemaError(f"{path}: no static features for neighborhood {nid!r}")
        try:
            out[i] = [float(row[n]) for n in names]
        except ValueError as exc:
            raise SchemaError(f"{path}: non-numeric static value for {nid!r}: {exc}") from None
    return out, names
