"""Least-squares regression trees (the boosting base learner).

Trees are stored as flat node arrays in preorder.  Leaves have
``feature == -1``.  Routing sends ``x[j] <= t`` left and ``x[j] > t`` right.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ArityMismatch, EmptyInput, ParseError

# Splits whose gain is below this fraction of the node's squared error are
# float noise, not structure.
_REL_GAIN_FLOOR = 1e-13


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 3
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("max_depth and min_samples_leaf must be >= 1")


@dataclass(frozen=True, eq=False)
class RegressionTree:
    feature: np.ndarray    # int, -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # leaf values; 0 at internal nodes
    n_features: int

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    @property
    def depth(self) -> int:
        depths = np.zeros(self.feature.size, dtype=np.intp)
        for node in range(self.feature.size):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return self.predict(x[None, :])[0]
        if x.shape[1] != self.n_features:
            raise ArityMismatch(f"tree expects {self.n_features} features, got {x.shape[1]}")
        return _kernels.predict_one(np.ascontiguousarray(x), self.feature, self.threshold,
                                    self.left, self.right, self.value)

    def leaf_index(self, x: np.ndarray) -> np.ndarray:
        """Index of the leaf each row lands in."""
        x = np.asarray(x, dtype=np.float64)
        node = np.zeros(x.shape[0], dtype=np.intp)
        for _ in range(self.feature.size):
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = x[np.arange(x.shape[0]), np.maximum(f, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)
        return node

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"b": float(self.value[node])}
        return {"j": int(self.feature[node]), "t": float(self.threshold[node]),
                "l": self.to_dict(int(self.left[node])), "r": self.to_dict(int(self.right[node]))}

    @classmethod
    def from_dict(cls, doc: dict, n_features: int) -> "RegressionTree":
        builder = _Builder()
        try:
            builder.add(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed tree node: {exc}") from None
        return builder.build(n_features)


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def new_node(self) -> int:
        for arr in (self.feature, self.left, self.right):
            arr.append(-1)
        self.threshold.append(0.0)
        self.value.append(0.0)
        return len(self.feature) - 1

    def add(self, doc: dict) -> int:
        node = self.new_node()
        if "b" in doc:
            self.value[node] = float(doc["b"])
        else:
            self.feature[node] = int(doc["j"])
            self.threshold[node] = float(doc["t"])
            self.left[node] = self.add(doc["l"])
            self.right[node] = self.add(doc["r"])
        return node

    def build(self, n_features: int) -> RegressionTree:
        return RegressionTree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            value=np.array(self.value, dtype=np.float64),
            n_features=n_features,
        )


def presort(x: np.ndarray) -> np.ndarray:
    """Per-feature row orders, ``(d, N)``; ties keep row order."""
    return np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T)


def grow_tree(x: np.ndarray, targets: np.ndarray, params: TreeParams,
              order: np.ndarray | None = None) -> RegressionTree:
    """Grow a tree from presorted feature orders (see :func:`presort`).

    Every split is exhaustive over features and midpoint thresholds.  Ties
    go to the lowest feature index, then the lowest threshold.
    """
    x = np.asarray(x, dtype=np.float64)
    if order is None:
        order = presort(x)
    n = x.shape[0]
    max_nodes = min(2 ** (params.max_depth + 1) - 1, 2 * n - 1)
    feature, threshold, left, right, value = _kernels.grow(
        np.ascontiguousarray(x.T), np.ascontiguousarray(order, dtype=np.int64),
        np.ascontiguousarray(targets, dtype=np.float64), params.max_depth,
        params.min_samples_leaf, _REL_GAIN_FLOOR, max_nodes)
    return RegressionTree(feature, threshold, left, right, value, x.shape[1])


def fit_tree(x: np.ndarray, targets: np.ndarray, params: TreeParams) -> RegressionTree:
    """Grow a least-squares regression tree greedily, depth first.

    Rows are first put in a canonical (lexicographic) order, so the result
    does not depend on how the caller ordered them.
    """
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyInput("fit_tree needs at least one row")
    if targets.shape != (x.shape[0],):
        raise ValueError("targets length must match rows of x")
    canon = np.lexsort((targets,) + tuple(x[:, j] for j in range(x.shape[1] - 1, -1, -1)))
    x, targets = x[canon], targets[canon]
    return grow_tree(x, targets, params)


def predict_tree(tree: RegressionTree, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.n_features,):
        raise ArityMismatch(f"expected {tree.n_features} values, got shape {x.shape}")
    return float(tree.predict(x[None, :])[0])
