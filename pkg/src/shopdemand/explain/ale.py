"""First-order Accumulated Local Effects.

Bin edges are nearest-rank quantiles of the feature.  The lowest edge is the
observed minimum and the first bin is closed on both ends, so the minimum
observation counts toward bin 1; later bins are ``(z[k-1], z[k]]``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from ..data import Dataset, FeatureKind, format_real
from ..errors import ConstantFeature, SchemaError

DEFAULT_K = 40


@dataclass(frozen=True, eq=False)
class AleCurve:
    feature: int
    edges: np.ndarray       # z_0 .. z_K
    counts: np.ndarray      # n(k) for k = 1..K
    uncentered: np.ndarray  # accumulated effect at each edge, 0 at z_0
    centered: np.ndarray

    @property
    def k(self) -> int:
        return self.counts.size

    def to_dict(self, feature_name: str | None = None) -> dict:
        return {
            "feature": feature_name if feature_name is not None else self.feature,
            "edges": [float(v) for v in self.edges],
            "counts": [int(c) for c in self.counts],
            "uncentered": [float(v) for v in self.uncentered],
            "centered": [float(v) for v in self.centered],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["edge", "centered_value", "count"])
        counts = np.concatenate([[0], self.counts])
        for z, v, c in zip(self.edges, self.centered, counts):
            w.writerow([format_real(z), format_real(v), int(c)])
        return buf.getvalue()


@dataclass(frozen=True)
class BinaryAle:
    """Effect of switching a 0/1 feature on: 0 at level 0, ``difference`` at level 1."""

    feature: int
    difference: float

    @property
    def levels(self) -> tuple[float, float]:
        return (0.0, self.difference)

    def to_dict(self, feature_name: str | None = None) -> dict:
        return {"feature": feature_name if feature_name is not None else self.feature,
                "levels": [0.0, 1.0], "effect": [0.0, self.difference]}

    def to_csv(self) -> str:
        return f"level,effect\n0,0.0\n1,{format_real(self.difference)}\n"


def quantile_edges(values: np.ndarray, k: int) -> np.ndarray:
    """Nearest-rank ``(i/k)``-quantiles for i = 0..k with duplicates merged."""
    srt = np.sort(values)
    n = srt.size
    ranks = [max(1, math.ceil(i * n / k)) for i in range(k + 1)]
    return np.unique(srt[np.asarray(ranks) - 1])


def _feature_column(dataset, feature):
    if isinstance(dataset, Dataset):
        j = dataset.schema.index(feature) if isinstance(feature, str) else int(feature)
        return dataset.x, j, dataset.schema.features[j].kind
    x = np.asarray(dataset, dtype=np.float64)
    return x, int(feature), None


def ale_curve(predict_fn, dataset: Dataset | np.ndarray, feature: int | str,
              k: int = DEFAULT_K) -> AleCurve:
    """Centered first-order ALE of one continuous or discrete feature.

    ``k`` is clamped to (distinct values - 1).  Discrete features with at
    most ``k + 1`` levels use every level as an edge.
    """
    x, j, kind = _feature_column(dataset, feature)
    if kind is FeatureKind.BINARY:
        raise SchemaError("binary features take ale_binary")
    if k < 1:
        raise ValueError("k must be >= 1")
    col = x[:, j]
    levels = np.unique(col)
    if levels.size < 2:
        raise ConstantFeature(f"feature {j} is constant")
    k = min(k, levels.size - 1)
    if kind is FeatureKind.DISCRETE and levels.size - 1 <= k:
        edges = levels
    else:
        edges = quantile_edges(col, k)

    bins = np.searchsorted(edges, col, side="left")
    bins[bins == 0] = 1                                   # the minimum joins bin 1
    counts = np.bincount(bins, minlength=edges.size)[1:]
    if np.any(counts == 0):                               # not reachable with data edges
        keep = np.concatenate([[True], counts > 0])
        edges = edges[keep]
        bins = np.searchsorted(edges, col, side="left")
        bins[bins == 0] = 1
        counts = np.bincount(bins, minlength=edges.size)[1:]

    hi, lo = x.copy(), x.copy()
    hi[:, j] = edges[bins]
    lo[:, j] = edges[bins - 1]
    out = np.asarray(predict_fn(np.vstack([hi, lo])), dtype=np.float64)
    diffs = out[: x.shape[0]] - out[x.shape[0]:]
    local = np.bincount(bins, weights=diffs, minlength=edges.size)[1:] / counts
    uncentered = np.concatenate([[0.0], np.cumsum(local)])
    shift = float(np.dot(counts, uncentered[1:]) / counts.sum())
    return AleCurve(j, edges, counts, uncentered, uncentered - shift)


def ale_binary(predict_fn, dataset: Dataset | np.ndarray, feature: int | str) -> BinaryAle:
    """Single-interval ALE of a 0/1 feature; no centering."""
    x, j, _ = _feature_column(dataset, feature)
    col = x[:, j]
    if not (np.any(col == 0) and np.any(col == 1)):
        raise ConstantFeature(f"feature {j} needs both levels present")
    on, off = x.copy(), x.copy()
    on[:, j] = 1.0
    off[:, j] = 0.0
    out = np.asarray(predict_fn(np.vstack([on, off])), dtype=np.float64)
    return BinaryAle(j, float(np.mean(out[: x.shape[0]] - out[x.shape[0]:])))
