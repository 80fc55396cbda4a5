from .geo import assign_neighborhood, distance_matrix, haversine, proximity_matrix
from .ingest import (
    SCHEMA_PRESETS,
    STATIC_FEATURES,
    Centroids,
    IncidentRecord,
    IngestReport,
    ingest_incidents,
    load_centroids,
    load_schema,
    load_static,
)
from .panel import OVERDOSES, TOTAL_CRIMES, PanelDataset, build_panel, select_categories
from .samples import Batch, Sample, SampleSet, SampleSplits, SplitSpec, Standardization, make_samples

__all__ = [
    "assign_neighborhood", "distance_matrix", "haversine", "proximity_matrix",
    "SCHEMA_PRESETS", "STATIC_FEATURES", "Centroids", "IncidentRecord", "IngestReport",
    "ingest_incidents", "load_centroids", "load_schema", "load_static",
    "OVERDOSES", "TOTAL_CRIMES", "PanelDataset", "build_panel", "select_categories",
    "Batch", "Sample", "SampleSet", "SampleSplits", "SplitSpec", "Standardization", "make_samples",
]
