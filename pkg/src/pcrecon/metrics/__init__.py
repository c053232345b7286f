from .kdtree import NnIndex, build_index
from .scores import (AGGREGATIONS, CHAMFER_MODES, DEFAULT_TAU, RECORD_FIELDS, MetricsReport, chamfer,
                     evaluate, fscore, report_from_values, track_score)

__all__ = [
    "AGGREGATIONS", "CHAMFER_MODES", "DEFAULT_TAU", "MetricsReport", "NnIndex", "RECORD_FIELDS",
    "build_index", "chamfer", "evaluate", "fscore", "report_from_values", "track_score",
]
