"""Palm-tree survey pipeline: aerial detection, street-level confirmation and
infestation timelines, backed by the C++ core."""

from palmscan._core import (
    BackendError,
    ConfigError,
    DomainError,
    Error,
    PersistenceError,
    ProtocolError,
    ProviderError,
    Survey,
    average_precision,
    bearing_deg,
    box_center_geo,
    build_timeline,
    camera_heading,
    classification_metrics,
    cost_comparison,
    geo_to_mercator,
    haversine_m,
    mercator_to_geo,
    pixel_shift_deg,
    pixel_to_geo,
    score,
    simulate,
    tile_bounds,
    tile_for_point,
)

__all__ = [
    "BackendError",
    "ConfigError",
    "DomainError",
    "Error",
    "PersistenceError",
    "ProtocolError",
    "ProviderError",
    "Survey",
    "average_precision",
    "bearing_deg",
    "box_center_geo",
    "build_timeline",
    "camera_heading",
    "classification_metrics",
    "cost_comparison",
    "geo_to_mercator",
    "haversine_m",
    "mercator_to_geo",
    "pixel_shift_deg",
    "pixel_to_geo",
    "score",
    "simulate",
    "tile_bounds",
    "tile_for_point",
]
