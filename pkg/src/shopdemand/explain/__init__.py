from .ale import AleCurve, BinaryAle, ale_binary, ale_curve, quantile_edges
from .shapley import (
    AttributionMatrix,
    ImportanceReport,
    ShapleyConfig,
    default_background,
    importance,
    shapley_attributions,
)

__all__ = [
    "AleCurve",
    "AttributionMatrix",
    "BinaryAle",
    "ImportanceReport",
    "ShapleyConfig",
    "ale_binary",
    "ale_curve",
    "default_background",
    "importance",
    "quantile_edges",
    "shapley_attributions",
]
