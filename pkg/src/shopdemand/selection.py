"""Hyperparameter grid search, the overfit gate, k-fold CV, and Shapley-driven RFE."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .data import Dataset, holdout, kfold
from .errors import (
    DegenerateResponse,
    EmptyGrid,
    NoModelPassesGate,
    SchemaMismatch,
    TooFewFeatures,
)
from .explain.shapley import ShapleyConfig, default_background, importance, shapley_attributions
from .gbm import GbmModel, GbmParams, HuberConfig, fit, predict
from .metrics import r_squared

log = logging.getLogger(__name__)

OVERFIT_GAP = 0.1
RFE_STOP_THRESHOLD = 0.01


@dataclass(frozen=True)
class Grid:
    m_trees_values: tuple[int, ...]
    max_depth_values: tuple[int, ...]
    min_samples_leaf_values: tuple[int, ...]
    learning_rate_values: tuple[float, ...]
    huber: HuberConfig = field(default_factory=HuberConfig.quantile)
    line_search_tol: float = 1e-8

    def __post_init__(self):
        for name in ("m_trees_values", "max_depth_values", "min_samples_leaf_values",
                     "learning_rate_values"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise EmptyGrid(f"{name} is empty")
            object.__setattr__(self, name, vals)

    def points(self) -> list[GbmParams]:
        """Every grid point, enumerated with trees slowest and learning rate fastest."""
        return [
            GbmParams(m, depth, leaf, lr, self.huber, self.line_search_tol)
            for m, depth, leaf, lr in itertools.product(
                self.m_trees_values, self.max_depth_values,
                self.min_samples_leaf_values, self.learning_rate_values)
        ]

    def __len__(self) -> int:
        return (len(self.m_trees_values) * len(self.max_depth_values)
                * len(self.min_samples_leaf_values) * len(self.learning_rate_values))

    def to_dict(self) -> dict:
        return {"trees": list(self.m_trees_values), "depth": list(self.max_depth_values),
                "leaf": list(self.min_samples_leaf_values), "lr": list(self.learning_rate_values),
                "huber": self.huber.to_dict(), "line_search_tol": self.line_search_tol}

    @classmethod
    def from_dict(cls, doc: dict) -> "Grid":
        return cls(tuple(doc["trees"]), tuple(doc["depth"]), tuple(doc["leaf"]), tuple(doc["lr"]),
                   HuberConfig.from_dict(doc.get("huber", {})), doc.get("line_search_tol", 1e-8))


def default_grid() -> Grid:
    """Grid bracketing the best city-level settings: 300-500 trees, depth 6-8,
    leaf size 8-12, learning rate 0.01-0.04."""
    return Grid((300, 400, 450, 500), (6, 7, 8), (8, 10, 12), (0.01, 0.02, 0.03, 0.04))


def reduced_grid() -> Grid:
    """Small grid for quick runs and RFE fast mode."""
    return Grid((60,), (2, 3), (5,), (0.1,))


@dataclass(frozen=True, eq=False)
class CandidateResult:
    params: GbmParams
    train_r2: float
    val_r2: float
    model: GbmModel

    @property
    def gap(self) -> float:
        return self.train_r2 - self.val_r2

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "train_r2": self.train_r2, "val_r2": self.val_r2}


def _fit_group(args) -> GbmModel:
    data, params = args
    return fit(data, params)


def grid_search(train: Dataset, validation: Dataset, grid: Grid, jobs: int = 1) -> list[CandidateResult]:
    """Fit one model per grid point; sort by training R^2, best first.

    Points differing only in tree count share one fit: a model with fewer
    trees is exactly the prefix of the larger one.
    """
    if train.schema.fingerprint() != validation.schema.fingerprint():
        raise SchemaMismatch("train and validation schemas differ")
    points = grid.points()
    groups: dict[tuple, GbmParams] = {}
    for p in points:
        key = (p.max_depth, p.min_samples_leaf, p.learning_rate)
        if key not in groups or p.m_trees > groups[key].m_trees:
            groups[key] = p
    keys = list(groups)
    fitted = dict(zip(keys, pmap(_fit_group, [(train, groups[k]) for k in keys], jobs)))

    results = []
    for p in points:
        model = fitted[(p.max_depth, p.min_samples_leaf, p.learning_rate)].truncated(p.m_trees)
        results.append(CandidateResult(p, r_squared(train.y, predict(model, train.x)),
                                       r_squared(validation.y, predict(model, validation.x)), model))
    return sorted(results, key=lambda c: -c.train_r2)


def select_best(candidates: list[CandidateResult], gap: float = OVERFIT_GAP) -> CandidateResult:
    """First candidate (in training-R^2 order) whose train-validation gap is below ``gap``."""
    for cand in candidates:
        if cand.train_r2 - cand.val_r2 < gap:
            return cand
        log.debug("skipping overfit candidate %s (gap %.4f)", cand.params, cand.gap)
    raise NoModelPassesGate(f"no candidate has a train-validation R^2 gap below {gap}")


@dataclass(frozen=True)
class CvReport:
    per_fold_train_r2: tuple[float, ...]
    per_fold_val_r2: tuple[float, ...]
    mean_val_r2: float
    std_val_r2: float

    def to_dict(self) -> dict:
        return {"per_fold_train_r2": list(self.per_fold_train_r2),
                "per_fold_val_r2": list(self.per_fold_val_r2),
                "mean_val_r2": self.mean_val_r2, "std_val_r2": self.std_val_r2}


def _cv_fold(args) -> tuple[float, float]:
    data, params, held = args
    mask = np.ones(data.n, dtype=bool)
    mask[held] = False
    train = data.take(np.nonzero(mask)[0])
    test = data.take(held)
    model = fit(train, params)
    return r_squared(train.y, predict(model, train.x)), r_squared(test.y, predict(model, test.x))


def cross_validate(data: Dataset, params: GbmParams, k: int = 10, seed: int = 0,
                   jobs: int = 1) -> CvReport:
    """k-fold CV; the reported spread is the population std over folds."""
    folds = kfold(data.n, k, seed)
    for i, held in enumerate(folds):
        if np.ptp(data.y[held]) == 0:
            raise DegenerateResponse(f"fold {i} has a constant held-out response")
    scores = pmap(_cv_fold, [(data, params, held) for held in folds], jobs)
    train_r2 = tuple(s[0] for s in scores)
    val_r2 = tuple(s[1] for s in scores)
    return CvReport(train_r2, val_r2, float(np.mean(val_r2)), float(np.std(val_r2)))


def confirm_selection(report: CvReport, train_r2: float, gap: float = OVERFIT_GAP) -> bool:
    """Accept the selected setting unless mean CV R^2 trails training R^2 by ``gap`` or more."""
    return train_r2 - report.mean_val_r2 < gap


# --- recursive feature elimination -----------------------------------------------


@dataclass(frozen=True)
class RfeIteration:
    features: tuple[str, ...]
    params: GbmParams
    cv_score: float
    importance: tuple[float, ...]
    removed: str | None
    gate_passed: bool = True

    def to_dict(self) -> dict:
        return {"features": list(self.features), "params": self.params.to_dict(),
                "cv_score": self.cv_score, "importance": list(self.importance),
                "removed": self.removed, "gate_passed": self.gate_passed}


@dataclass(frozen=True)
class RfeTrace:
    iterations: tuple[RfeIteration, ...]
    final_features: tuple[str, ...]

    def to_list(self) -> list[dict]:
        return [it.to_dict() for it in self.iterations]

    def to_dict(self) -> dict:
        return {"iterations": self.to_list(), "final_features": list(self.final_features)}


def _pick(candidates: list[CandidateResult], gap: float) -> tuple[CandidateResult, bool]:
    try:
        return select_best(candidates, gap), True
    except NoModelPassesGate:
        # keep eliminating with the least-overfit setting rather than abort
        return min(candidates, key=lambda c: c.gap), False


def rfe(data: Dataset, grid: Grid, stop_threshold: float = RFE_STOP_THRESHOLD, seed: int = 0, *,
        cv_k: int = 10, resplit: bool = False, train_fraction: float = 0.75,
        gap: float = OVERFIT_GAP, shapley_mode: str = "auto", n_permutations: int = 20,
        background_size: int = 100, explain_rows: int = 100, exact_max_features: int = 6,
        jobs: int = 1) -> RfeTrace:
    """Recursive feature elimination driven by mean |Shapley| importance.

    ``data`` is the merged train + validation sample.  Each round selects
    hyperparameters on a holdout split of it, scores the chosen setting by
    ``cv_k``-fold CV, and drops the least important feature.  Elimination
    stops once the CV score falls by more than ``stop_threshold`` from the
    previous round (the previous feature set is returned) or a single
    feature remains.
    """
    if data.schema.d < 2:
        raise TooFewFeatures("RFE needs at least two features")
    active = list(range(data.schema.d))
    train_idx, val_idx = holdout(data.n, train_fraction, seed)
    iterations: list[RfeIteration] = []
    prev: RfeIteration | None = None
    final: tuple[str, ...] | None = None
    round_no = 0

    while True:
        sub = data.select_features(active)
        names = tuple(sub.schema.names)
        if resplit and round_no > 0:
            train_idx, val_idx = holdout(data.n, train_fraction, seed + round_no)
        chosen, passed = _pick(grid_search(sub.take(train_idx), sub.take(val_idx), grid, jobs), gap)
        score = cross_validate(sub, chosen.params, cv_k, seed, jobs).mean_val_r2
        log.info("RFE round %d: %d features, CV R^2 %.4f", round_no, len(active), score)

        if prev is not None and prev.cv_score - score > stop_threshold:
            iterations.append(RfeIteration(names, chosen.params, score, (), None, passed))
            final = prev.features
            break
        if len(active) == 1:
            iterations.append(RfeIteration(names, chosen.params, score, (), None, passed))
            final = names
            break

        model = chosen.model
        mode = shapley_mode
        if mode == "auto":
            mode = "exact" if len(active) <= exact_max_features else "permutation"
        bg = default_background(sub, background_size, seed)
        rows = default_background(sub, explain_rows, seed + 1)
        cfg = ShapleyConfig(bg, mode=mode, n_permutations=n_permutations, seed=seed)
        report = importance(shapley_attributions(model, rows, cfg))
        drop = report.least_important()
        it = RfeIteration(names, chosen.params, score, tuple(float(v) for v in report.mean_abs),
                          names[drop], passed)
        iterations.append(it)
        prev = it
        del active[drop]
        round_no += 1

    return RfeTrace(tuple(iterations), final)
