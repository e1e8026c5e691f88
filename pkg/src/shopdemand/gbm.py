"""Gradient boosting with the Huber loss over least-squares regression trees.

The fitted model predicts ``f0 + sum_m lr * rho_m * tree_m(x)``.  Each stage
fits a tree to the Huber negative gradient, then picks the scalar ``rho_m``
that minimizes the total Huber loss along that tree's direction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from . import _kernels
from .data import Dataset
from .errors import (
    ArityMismatch,
    BadDelta,
    EmptyInput,
    EmptyResiduals,
    LengthMismatch,
    ParseError,
    SchemaMismatch,
    VersionMismatch,
)
from .tree import RegressionTree, TreeParams, grow_tree, presort

MODEL_VERSION = 1
_DELTA_FLOOR = 1e-12


# --- loss -------------------------------------------------------------------


def _check_delta(delta: float) -> None:
    if not delta > 0:
        raise BadDelta(f"delta must be positive, got {delta}")


def huber_loss(y, f, delta: float):
    """Elementwise Huber loss; quadratic within ``delta``, linear beyond."""
    _check_delta(delta)
    a = np.abs(np.asarray(y, dtype=np.float64) - np.asarray(f, dtype=np.float64))
    out = np.where(a <= delta, 0.5 * a * a, a * delta - 0.5 * delta * delta)
    return float(out) if out.ndim == 0 else out


def huber_neg_gradient(y, f, delta: float):
    """Negative derivative of the loss in ``f``: the residual clipped to ``[-delta, delta]``."""
    _check_delta(delta)
    r = np.asarray(y, dtype=np.float64) - np.asarray(f, dtype=np.float64)
    out = np.clip(r, -delta, delta)
    return float(out) if out.ndim == 0 else out


def total_huber_loss(y: np.ndarray, f: np.ndarray, delta: float) -> float:
    return float(np.sum(huber_loss(y, f, delta)))


@dataclass(frozen=True)
class HuberConfig:
    """How the Huber threshold is chosen: a fixed ``delta``, or an ``alpha``
    quantile of the current absolute residuals re-resolved every stage."""

    mode: str = "quantile"
    delta: float | None = None
    alpha: float | None = 0.9

    def __post_init__(self):
        if self.mode == "fixed":
            if self.delta is None or not self.delta > 0:
                raise BadDelta("fixed mode needs delta > 0")
        elif self.mode == "quantile":
            if self.alpha is None or not 0 < self.alpha <= 1:
                raise ValueError("quantile mode needs alpha in (0, 1]")
        else:
            raise ValueError(f"unknown Huber mode {self.mode!r}")

    @classmethod
    def fixed(cls, delta: float) -> "HuberConfig":
        return cls(mode="fixed", delta=float(delta), alpha=None)

    @classmethod
    def quantile(cls, alpha: float = 0.9) -> "HuberConfig":
        return cls(mode="quantile", delta=None, alpha=float(alpha))

    def to_dict(self) -> dict:
        if self.mode == "fixed":
            return {"mode": "fixed", "delta": self.delta}
        return {"mode": "quantile", "alpha": self.alpha}

    @classmethod
    def from_dict(cls, doc: dict) -> "HuberConfig":
        if doc.get("mode") == "fixed":
            return cls.fixed(doc["delta"])
        return cls.quantile(doc.get("alpha", 0.9))


def resolve_delta(residuals, huber: HuberConfig) -> float:
    if huber.mode == "fixed":
        return float(huber.delta)
    a = np.sort(np.abs(np.asarray(residuals, dtype=np.float64)))
    if a.size == 0:
        raise EmptyResiduals("cannot take a quantile of no residuals")
    rank = max(1, math.ceil(huber.alpha * a.size - 1e-12))
    return max(float(a[rank - 1]), _DELTA_FLOOR)


# --- one-dimensional search -----------------------------------------------------


def _bisect_root(slope: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    """Zero of a nondecreasing function on ``[lo, hi]`` to bracket width ``tol``."""
    while hi - lo >= tol:
        mid = lo + (hi - lo) / 2
        if mid <= lo or mid >= hi:
            break
        s = slope(mid)
        if s == 0:
            return mid
        if s > 0:
            hi = mid
        else:
            lo = mid
    return lo + (hi - lo) / 2


def _minimize_convex(slope: Callable[[float], float], tol: float) -> float:
    """Minimize a convex C1 function given its derivative, starting from 0.

    The bracket grows geometrically away from 0 in the descent direction
    until the derivative changes sign, then bisection narrows it.
    """
    s0 = slope(0.0)
    if s0 == 0:
        return 0.0
    direction = -1.0 if s0 > 0 else 1.0
    inner, step = 0.0, 1.0
    while True:
        outer = direction * step
        s = slope(outer)
        if s == 0:
            return outer
        if (s > 0) == (direction > 0):
            break
        inner, step = outer, step * 2.0
        if step > 1e300:
            return outer
    lo, hi = (inner, outer) if direction > 0 else (outer, inner)
    return _bisect_root(slope, lo, hi, tol)


def line_search_rho(y, f_prev, h_vals, delta: float, tol: float = 1e-8) -> float:
    """Step length minimizing ``sum huber(y, f_prev + rho * h)`` over ``rho``."""
    _check_delta(delta)
    y = np.asarray(y, dtype=np.float64)
    f_prev = np.asarray(f_prev, dtype=np.float64)
    h = np.asarray(h_vals, dtype=np.float64)
    if not (y.shape == f_prev.shape == h.shape):
        raise LengthMismatch("y, f_prev and h must have equal length")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not np.any(h):
        return 0.0
    r = y - f_prev

    def slope(rho: float) -> float:
        return -float(np.dot(h, np.clip(r - rho * h, -delta, delta)))

    rho = _minimize_convex(slope, tol)
    if total_huber_loss(r, rho * h, delta) > total_huber_loss(r, 0.0, delta):
        return 0.0
    return rho


def init_f0(y, huber: HuberConfig, tol: float = 1e-8) -> float:
    """Constant minimizing total Huber loss, searched on ``[min y, max y]``.

    In quantile mode the threshold comes from the residuals about the median.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise EmptyInput("init_f0 needs at least one response")
    lo, hi = float(y.min()), float(y.max())
    if lo == hi:
        return lo
    delta = resolve_delta(y - np.median(y), huber)

    def slope(c: float) -> float:
        return -float(np.sum(np.clip(y - c, -delta, delta)))

    return _bisect_root(slope, lo, hi, tol)


# --- model ------------------------------------------------------------------


@dataclass(frozen=True)
class GbmParams:
    m_trees: int = 400
    max_depth: int = 7
    min_samples_leaf: int = 10
    learning_rate: float = 0.01
    huber: HuberConfig = field(default_factory=HuberConfig.quantile)
    line_search_tol: float = 1e-8

    def __post_init__(self):
        if self.m_trees < 0:
            raise ValueError("m_trees must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if not self.line_search_tol > 0:
            raise ValueError("line_search_tol must be positive")
        TreeParams(self.max_depth, self.min_samples_leaf)

    @property
    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_depth, self.min_samples_leaf)

    def to_dict(self) -> dict:
        return {"m_trees": self.m_trees, "max_depth": self.max_depth,
                "min_samples_leaf": self.min_samples_leaf, "learning_rate": self.learning_rate,
                "huber": self.huber.to_dict(), "line_search_tol": self.line_search_tol}

    @classmethod
    def from_dict(cls, doc: dict) -> "GbmParams":
        return cls(int(doc["m_trees"]), int(doc["max_depth"]), int(doc["min_samples_leaf"]),
                   float(doc["learning_rate"]), HuberConfig.from_dict(doc.get("huber", {})),
                   float(doc.get("line_search_tol", 1e-8)))


@dataclass(frozen=True)
class Stage:
    tree: RegressionTree
    rho: float
    delta: float


@dataclass(frozen=True, eq=False)
class GbmModel:
    f0: float
    stages: tuple[Stage, ...]
    learning_rate: float
    schema_fingerprint: str
    n_features: int

    @property
    def m_trees(self) -> int:
        return len(self.stages)

    def truncated(self, m: int) -> "GbmModel":
        """The model after its first ``m`` stages."""
        return GbmModel(self.f0, self.stages[:m], self.learning_rate,
                        self.schema_fingerprint, self.n_features)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return predict(self, x)

    @cached_property
    def _packed(self) -> tuple:
        """All trees concatenated into one node table, with each tree's root offset."""
        trees = [st.tree for st in self.stages]
        sizes = [t.feature.size for t in trees]
        roots = np.cumsum([0] + sizes[:-1], dtype=np.int64) if trees else np.zeros(0, np.int64)

        def cat(name, dtype, shift=False):
            parts = [np.zeros(0, dtype)]
            for t, r in zip(trees, roots):
                arr = getattr(t, name).astype(dtype)
                parts.append(np.where(arr >= 0, arr + r, arr) if shift else arr)
            return np.concatenate(parts)

        scales = np.array([self.learning_rate * st.rho for st in self.stages], dtype=np.float64)
        return (cat("feature", np.int64), cat("threshold", np.float64),
                cat("left", np.int64, True), cat("right", np.int64, True),
                cat("value", np.float64), roots, scales)


def fit(train: Dataset, params: GbmParams) -> GbmModel:
    """Boost ``params.m_trees`` Huber-gradient trees on ``train``."""
    if train.n == 0:
        raise EmptyInput("cannot fit on an empty dataset")
    # A canonical row order makes the fit independent of how rows were listed
    # (up to rows with identical features).
    canon = np.lexsort(tuple(train.x[:, j] for j in range(train.schema.d - 1, -1, -1)))
    x, y = train.x[canon], train.y[canon]
    order = presort(x)
    f0 = init_f0(y, params.huber, params.line_search_tol)
    f = np.full(train.n, f0)
    tp = params.tree_params
    stages = []
    for _ in range(params.m_trees):
        residual = y - f
        delta = resolve_delta(residual, params.huber)
        grad = np.clip(residual, -delta, delta)
        tree = grow_tree(x, grad, tp, order)
        h = tree.predict(x)
        rho = line_search_rho(y, f, h, delta, params.line_search_tol)
        step = params.learning_rate * rho
        f_next = f + step * h
        if total_huber_loss(y, f_next, delta) > total_huber_loss(y, f, delta):
            # rho = 0 is always feasible; keep the stage but make it inert
            rho, step, f_next = 0.0, 0.0, f
        f = f_next
        stages.append(Stage(tree, rho, delta))
    return GbmModel(float(f0), tuple(stages), params.learning_rate,
                    train.schema.fingerprint(), train.schema.d)


def _matrix(model: GbmModel, x) -> np.ndarray:
    if isinstance(x, Dataset):
        if x.schema.fingerprint() != model.schema_fingerprint:
            raise SchemaMismatch("dataset schema differs from the one the model was trained on")
        x = x.x
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.n_features:
        raise ArityMismatch(f"model expects {model.n_features} features, got {x.shape[1]}")
    return x


def staged_predict(model: GbmModel, x) -> Iterator[np.ndarray]:
    """Predictions after 0, 1, ..., M stages (M + 1 arrays)."""
    x = _matrix(model, x)
    pred = np.full(x.shape[0], model.f0)
    yield pred.copy()
    for st in model.stages:
        pred = pred + (model.learning_rate * st.rho) * st.tree.predict(x)
        yield pred.copy()


def predict(model: GbmModel, x) -> np.ndarray:
    x = _matrix(model, x)
    feature, threshold, left, right, value, roots, scales = model._packed
    return _kernels.predict_sum(np.ascontiguousarray(x), float(model.f0), feature, threshold,
                                left, right, value, roots, scales)


# --- serialization ------------------------------------------------------------


def to_document(model: GbmModel) -> dict:
    return {
        "version": MODEL_VERSION,
        "f0": model.f0,
        "learning_rate": model.learning_rate,
        "schema_fingerprint": model.schema_fingerprint,
        "n_features": model.n_features,
        "stages": [{"rho": st.rho, "delta": st.delta, "tree": st.tree.to_dict()} for st in model.stages],
    }


def from_document(doc: dict) -> GbmModel:
    if not isinstance(doc, dict) or "version" not in doc:
        raise ParseError("model document lacks a version tag")
    if doc["version"] != MODEL_VERSION:
        raise VersionMismatch(f"unsupported model version {doc['version']!r}")
    try:
        n_features = int(doc["n_features"])
        stages = tuple(
            Stage(RegressionTree.from_dict(s["tree"], n_features), float(s["rho"]),
                  float(s.get("delta", 0.0)))
            for s in doc["stages"]
        )
        return GbmModel(float(doc["f0"]), stages, float(doc["learning_rate"]),
                        str(doc["schema_fingerprint"]), n_features)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model document: {exc!r}") from None


def dumps_model(model: GbmModel) -> str:
    return json.dumps(to_document(model), separators=(",", ":")) + "\n"


def loads_model(text: str) -> GbmModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model is not valid JSON: {exc}") from None
    return from_document(doc)


def save_model(model: GbmModel, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path: str | Path) -> GbmModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))
