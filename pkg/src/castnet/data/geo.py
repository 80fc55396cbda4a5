"""Great-circle distances and the proximity weighting used as an attention query."""

from __future__ import annotations

import numpy as np

EARTH_RADIUS = {"km": 6371.0088, "mi": 3958.7613, "m": 6371008.8}


def haversine(lat1, lon1, lat2, lon2, unit: str = "km"):
    """Great-circle distance between points given in degrees. Broadcasts."""
    radius = EARTH_RADIUS[unit]
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * radius * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def distance_matrix(latlon: np.ndarray, unit: str = "km") -> np.ndarray:
    latlon = np.asarray(latlon, dtype=np.float64)
    lat, lon = latlon[:, 0], latlon[:, 1]
    d = haversine(lat[:, None], lon[:, None], lat[None, :], lon[None, :], unit)
    # symmetric by construction up to rounding in the trig terms; force it exactly
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def proximity_from_distance(dist):
    return 1.0 / np.sqrt(1.0 + np.asarray(dist, dtype=np.float64))


def proximity_matrix(latlon: np.ndarray, unit: str = "km") -> np.ndarray:
    """prox(a, b) = 1 / sqrt(1 + haversine(a, b)); unit diagonal, symmetric."""
    return proximity_from_distance(distance_matrix(latlon, unit))


def assign_neighborhood(lat: float, lon: float, centroids: np.ndarray,
                        bbox: tuple[float, float, float, float] | None = None,
                        unit: str = "km") -> int | None:
    """Index of the nearest centroid, lowest index on ties.

    ``bbox`` is (lat_min, lat_max, lon_min, lon_max); points outside it
    return None so the caller can count them as rejected.
    """
    centroids = np.asarray(centroids, dtype=np.float64)
    if centroids.size == 0:
        raise ValueError("no centroids to assign against")
    if bbox is not None:
        lat_min, lat_max, lon_min, lon_max = bbox
        if not (lat_min <= lat <= lat_max and lon_min <= lon <= lon_max):
            return None
    d = haversine(lat, lon, centroids[:, 0], centroids[:, 1], unit)
    return int(np.argmin(d))
