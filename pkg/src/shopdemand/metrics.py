"""Goodness-of-fit metrics and least-squares linear / quadratic baselines."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ArityMismatch, DegenerateResponse, LengthMismatch, ParseError, RankDeficient


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape or y.size == 0:
        raise LengthMismatch(f"need equal nonempty lengths, got {y.size} and {yhat.size}")
    return y, yhat


def r_squared(y, yhat) -> float:
    """Coefficient of determination, 1 - SSE / SST."""
    y, yhat = _pair(y, yhat)
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0:
        raise DegenerateResponse("R^2 is undefined for a constant response")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / sst


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.sqrt(np.mean((yhat - y) ** 2)))


# --- baselines -------------------------------------------------------------


def term_names(feature_names: list[str], basis: str) -> list[str]:
    """Basis term labels: originals, then squares, then cross-products (j < k)."""
    names = list(feature_names)
    if basis == "linear":
        return names
    if basis != "quadratic":
        raise ValueError(f"unknown basis {basis!r}")
    return (names + [f"{n}^2" for n in names]
            + [f"{a}*{b}" for a, b in itertools.combinations(names, 2)])


def expand(x: np.ndarray, basis: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if basis == "linear":
        return x
    if basis != "quadratic":
        raise ValueError(f"unknown basis {basis!r}")
    d = x.shape[1]
    pairs = list(itertools.combinations(range(d), 2))
    cross = [x[:, a] * x[:, b] for a, b in pairs]
    return np.column_stack([x, x**2] + cross) if cross else np.column_stack([x, x**2])


@dataclass(frozen=True, eq=False)
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    basis: str
    term_names: tuple[str, ...]
    n_features: int

    def to_dict(self) -> dict:
        return {"basis": self.basis, "intercept": self.intercept,
                "coefficients": [float(c) for c in self.coefficients],
                "term_names": list(self.term_names), "n_features": self.n_features}

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearModel":
        try:
            return cls(float(doc["intercept"]), np.asarray(doc["coefficients"], dtype=np.float64),
                       str(doc["basis"]), tuple(doc["term_names"]), int(doc["n_features"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed baseline document: {exc!r}") from None


def fit_baseline(train: Dataset, basis: str = "linear") -> LinearModel:
    """Least-squares fit through a Householder QR of the scaled design matrix.

    Columns are scaled to unit max-abs before factorizing so that the rank
    check is not fooled by features measured in very different units.
    """
    names = term_names(train.schema.names, basis)
    design = np.column_stack([np.ones(train.n), expand(train.x, basis)])
    scale = np.max(np.abs(design), axis=0)
    scale[scale == 0] = 1.0
    scaled = design / scale
    q, r = np.linalg.qr(scaled, mode="reduced")
    diag = np.abs(np.diag(r))
    tol = max(scaled.shape) * np.finfo(np.float64).eps * max(diag.max(), 1.0) * 1e3
    if scaled.shape[0] < scaled.shape[1]:
        raise RankDeficient(names[scaled.shape[0] - 1] if scaled.shape[0] > 0 else "intercept")
    bad = np.nonzero(diag <= tol)[0]
    if bad.size:
        k = int(bad[0])
        raise RankDeficient("intercept" if k == 0 else names[k - 1])
    beta = np.linalg.solve(r, q.T @ train.y) / scale
    return LinearModel(float(beta[0]), beta[1:], basis, tuple(names), train.schema.d)


def predict_baseline(model: LinearModel, x) -> np.ndarray:
    if isinstance(x, Dataset):
        x = x.x
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.n_features:
        raise ArityMismatch(f"baseline expects {model.n_features} features, got {x.shape[1]}")
    return model.intercept + expand(x, model.basis) @ model.coefficients
