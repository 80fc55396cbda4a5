"""Small CSV files laid out like the two city portal exports, with known contents."""

import csv
from datetime import date, timedelta

import numpy as np

CHICAGO_CATEGORIES = ["THEFT", "BATTERY", "CRIMINAL DAMAGE", "NARCOTICS", "ASSAULT", "OTHER OFFENSE",
                      "BURGLARY", "DECEPTIVE PRACTICE", "MOTOR VEHICLE THEFT", "ROBBERY",
                      "CRIMINAL TRESPASS", "WEAPONS VIOLATION", "PUBLIC PEACE VIOLATION"]
CHICAGO_RARE = ["GAMBLING", "OBSCENITY"]
CINCINNATI_CATEGORIES = ["THEFT", "PART 2 MINOR", "ASSAULT", "BURGLARY/BREAKING ENTERING",
                         "UNAUTHORIZED USE", "ROBBERY", "CRIMINAL DAMAGING", "HOMICIDE"]
CINCINNATI_RARE = ["ARSON"]


def write_centroids(path, L: int, lat0: float, lon0: float, seed: int = 0):
    rng = np.random.default_rng(seed)
    coords = np.column_stack([lat0 + rng.uniform(-0.1, 0.1, L), lon0 + rng.uniform(-0.1, 0.1, L)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["neighborhood_id", "name", "lat", "lon"])
        for i, (la, lo) in enumerate(coords):
            w.writerow([i + 1, f"Area {i + 1}", la, lo])
    return coords


def _weighted_categories(common, rare, n_rows, rng):
    # every common category well above 1%, rare ones well below
    n_rare = max(1, n_rows // 400)
    cats = [rare[i % len(rare)] for i in range(n_rare)]
    cats += [common[i % len(common)] for i in range(n_rows - n_rare)]
    rng.shuffle(cats)
    return cats


def write_chicago(path, L: int = 5, n_rows: int = 2000, n_bad: int = 7, seed: int = 0):
    """Chicago layout: labelled community areas, 13 common + 2 rare primary types.

    Returns the number of malformed rows written.
    """
    rng = np.random.default_rng(seed)
    cats = _weighted_categories(CHICAGO_CATEGORIES, CHICAGO_RARE, n_rows, rng)
    start = date(2015, 8, 3)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ID", "Case Number", "Date", "Block", "Primary Type", "Description",
                    "Community Area", "Latitude", "Longitude"])
        for i, cat in enumerate(cats):
            day = start + timedelta(days=int(rng.integers(0, 70)))
            stamp = f"{day.month:02d}/{day.day:02d}/{day.year} 0{rng.integers(1, 10)}:15:00 PM"
            w.writerow([i, f"HY{i:06d}", stamp, "0000X W MAIN ST", f"  {cat.lower()} ", "",
                        f"{int(rng.integers(1, L + 1))}.0", "", ""])
        for j in range(n_bad):
            w.writerow([n_rows + j, "BAD", "not a date", "", "THEFT", "", "1", "", ""])
    return n_bad


def write_cincinnati(path, centroids, n_rows: int = 1500, n_bad: int = 4, seed: int = 1):
    """Cincinnati layout: coordinates only, 8 common + 1 rare UCR group."""
    rng = np.random.default_rng(seed)
    cats = _weighted_categories(CINCINNATI_CATEGORIES, CINCINNATI_RARE, n_rows, rng)
    start = date(2015, 8, 3)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["INSTANCEID", "DATE_REPORTED", "UCR_GROUP", "CPD_NEIGHBORHOOD", "LATITUDE_X", "LONGITUDE_X"])
        for i, cat in enumerate(cats):
            day = start + timedelta(days=int(rng.integers(0, 70)))
            la, lo = centroids[rng.integers(0, len(centroids))] + rng.normal(scale=0.001, size=2)
            w.writerow([i, f"{day.month:02d}/{day.day:02d}/{day.year} 11:00:00 AM", cat, "", la, lo])
        for j in range(n_bad):
            w.writerow([n_rows + j, "08/05/2015 11:00:00 AM", "THEFT", "", "", "north"])
    return n_bad


def write_overdoses(path, L: int, n_rows: int = 120, seed: int = 2):
    rng = np.random.default_rng(seed)
    start = date(2015, 8, 3)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "area"])
        for _ in range(n_rows):
            w.writerow([(start + timedelta(days=int(rng.integers(0, 70)))).isoformat(), int(rng.integers(1, L + 1))])
