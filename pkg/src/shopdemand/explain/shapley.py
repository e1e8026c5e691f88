"""Shapley attributions with interventional coalition values.

The value of a coalition ``S`` for observation ``x`` is the mean prediction
over background rows ``b`` of the hybrid point that takes the coordinates in
``S`` from ``x`` and the rest from ``b``.  Nothing is refit.

``predict_fn`` is always batched: it maps an ``(n, d)`` array to ``n`` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..errors import DimLimitExceeded, EmptyBackground

# Upper bound on hybrid rows handed to predict_fn in one call.
_MAX_BATCH_ROWS = 400_000


@dataclass(frozen=True)
class ShapleyConfig:
    background: np.ndarray
    mode: str = "exact"
    n_permutations: int = 100
    seed: int = 0
    exact_dim_limit: int = 14

    def __post_init__(self):
        bg = self.background.x if isinstance(self.background, Dataset) else self.background
        bg = np.atleast_2d(np.asarray(bg, dtype=np.float64))
        if bg.shape[0] == 0:
            raise EmptyBackground("background sample is empty")
        object.__setattr__(self, "background", bg)
        if self.mode not in ("exact", "permutation"):
            raise ValueError(f"unknown Shapley mode {self.mode!r}")
        if self.mode == "permutation" and self.n_permutations < 1:
            raise ValueError("n_permutations must be >= 1")


def default_background(data: Dataset | np.ndarray, size: int = 100, seed: int = 0) -> np.ndarray:
    """A seeded subsample of at most ``size`` rows, in original row order."""
    x = data.x if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if x.shape[0] <= size:
        return x.copy()
    rows = np.sort(np.random.default_rng(seed).choice(x.shape[0], size=size, replace=False))
    return x[rows]


@dataclass(frozen=True, eq=False)
class AttributionMatrix:
    phi: np.ndarray       # (N, d)
    baseline: float

    def to_dict(self, feature_names: list[str] | None = None) -> dict:
        out = {"baseline": self.baseline, "phi": [[float(v) for v in row] for row in self.phi]}
        if feature_names is not None:
            out["features"] = list(feature_names)
        return out


def _coalition_weights(d: int) -> np.ndarray:
    """Weight of a coalition of size s that excludes the feature: s!(d-s-1)!/d!."""
    return np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d)
                     for s in range(d)])


def _exact(predict_fn, x: np.ndarray, bg: np.ndarray) -> tuple[np.ndarray, float]:
    n, d = x.shape
    n_sub = 1 << d
    codes = np.arange(n_sub)
    masks = ((codes[:, None] >> np.arange(d)) & 1).astype(bool)   # bit j <-> feature j
    sizes = masks.sum(axis=1)
    weights = _coalition_weights(d)
    nb = bg.shape[0]

    per_call = max(1, _MAX_BATCH_ROWS // (n_sub * nb))
    values = np.empty((n, n_sub))
    for start in range(0, n, per_call):
        xi = x[start:start + per_call]
        hybrid = np.where(masks[None, :, None, :], xi[:, None, None, :], bg[None, None, :, :])
        out = np.asarray(predict_fn(hybrid.reshape(-1, d)), dtype=np.float64)
        values[start:start + per_call] = out.reshape(xi.shape[0], n_sub, nb).mean(axis=2)

    phi = np.empty((n, d))
    for j in range(d):
        without = codes[~masks[:, j]]
        gains = values[:, without | (1 << j)] - values[:, without]
        phi[:, j] = gains @ weights[sizes[without]]
    baseline = float(np.mean(np.asarray(predict_fn(bg), dtype=np.float64)))
    return phi, baseline


def _permutation(predict_fn, x: np.ndarray, bg: np.ndarray, n_perm: int,
                 seed: int) -> tuple[np.ndarray, float]:
    n, d = x.shape
    nb = bg.shape[0]
    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.broadcast_to(np.arange(d), (n, n_perm, d)), axis=2)
    # step k of a permutation has its first k features switched on
    ranks = np.argsort(perms, axis=2)                        # position of each feature
    steps = np.arange(d + 1)[:, None]
    phi = np.zeros((n, d))
    per_call = max(1, _MAX_BATCH_ROWS // ((d + 1) * nb * n_perm))
    for start in range(0, n, per_call):
        stop = min(n, start + per_call)
        rk = ranks[start:stop]                                # (m, P, d)
        masks = rk[:, :, None, :] < steps[None, None, :, :]   # (m, P, d+1, d)
        xi = x[start:stop]
        hybrid = np.where(masks[:, :, :, None, :], xi[:, None, None, None, :],
                          bg[None, None, None, :, :])
        out = np.asarray(predict_fn(hybrid.reshape(-1, d)), dtype=np.float64)
        vals = out.reshape(stop - start, n_perm, d + 1, nb).mean(axis=3)
        gains = np.diff(vals, axis=2)                         # gain of the k-th entrant
        entrant = perms[start:stop]
        contrib = np.zeros((stop - start, n_perm, d))
        np.put_along_axis(contrib, entrant, gains, axis=2)
        phi[start:stop] = contrib.mean(axis=1)
    baseline = float(np.mean(np.asarray(predict_fn(bg), dtype=np.float64)))
    return phi, baseline


def shapley_attributions(predict_fn, x, config: ShapleyConfig) -> AttributionMatrix:
    """Per-observation, per-feature Shapley values.

    ``exact`` enumerates every coalition; ``permutation`` averages marginal
    contributions over ``n_permutations`` seeded orderings per observation.
    """
    x = np.atleast_2d(np.asarray(x.x if isinstance(x, Dataset) else x, dtype=np.float64))
    bg = config.background
    if bg.shape[1] != x.shape[1]:
        raise ValueError("background and x must have the same number of features")
    if config.mode == "exact":
        if x.shape[1] > config.exact_dim_limit:
            raise DimLimitExceeded(
                f"exact mode allows at most {config.exact_dim_limit} features, got {x.shape[1]}")
        phi, baseline = _exact(predict_fn, x, bg)
    else:
        phi, baseline = _permutation(predict_fn, x, bg, config.n_permutations, config.seed)
    return AttributionMatrix(phi, baseline)


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    signed_sum: np.ndarray
    mean_abs: np.ndarray

    @property
    def ranking(self) -> list[int]:
        """Feature indices by descending mean |phi|; ties keep index order."""
        return sorted(range(self.mean_abs.size), key=lambda j: (-self.mean_abs[j], j))

    def least_important(self) -> int:
        return int(np.argmin(self.mean_abs))

    def to_dict(self, feature_names: list[str] | None = None) -> dict:
        names = feature_names or [str(j) for j in range(self.mean_abs.size)]
        return {
            "features": [
                {"name": names[j], "signed_sum": float(self.signed_sum[j]),
                 "mean_abs": float(self.mean_abs[j])}
                for j in range(self.mean_abs.size)
            ],
            "ranking": [names[j] for j in self.ranking],
        }


def importance(attributions: AttributionMatrix) -> ImportanceReport:
    phi = attributions.phi
    if phi.size == 0:
        raise ValueError("empty attribution matrix")
    return ImportanceReport(phi.sum(axis=0), np.abs(phi).mean(axis=0))
