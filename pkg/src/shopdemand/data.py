"""Feature schemas, CSV ingestion, deterministic splits, and the synthetic generator.

All randomness goes through :func:`numpy.random.default_rng`, i.e. the PCG64
bit generator seeded with the caller's integer, so splits, folds, and
synthetic samples are reproducible across runs and platforms.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    BadFractions,
    BadK,
    DomainViolation,
    InvalidRange,
    MissingColumn,
    MissingValue,
    SchemaError,
    TypeViolation,
)


class FeatureKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: FeatureKind
    declared_min: float
    declared_max: float
    allowed_values: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        if self.declared_min > self.declared_max:
            raise SchemaError(f"{self.name}: min {self.declared_min} > max {self.declared_max}")
        if self.allowed_values is not None:
            if self.kind is not FeatureKind.DISCRETE:
                raise SchemaError(f"{self.name}: allowed_values only apply to discrete features")
            vals = tuple(float(v) for v in self.allowed_values)
            for v in vals:
                if not self.declared_min <= v <= self.declared_max:
                    raise SchemaError(f"{self.name}: allowed value {v} outside declared range")
            object.__setattr__(self, "allowed_values", vals)

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind.value,
               "min": self.declared_min, "max": self.declared_max}
        if self.allowed_values is not None:
            out["allowed_values"] = list(self.allowed_values)
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSpec":
        try:
            allowed = doc.get("allowed_values")
            return cls(
                name=str(doc["name"]),
                kind=FeatureKind(doc["kind"]),
                declared_min=float(doc["min"]),
                declared_max=float(doc["max"]),
                allowed_values=tuple(allowed) if allowed is not None else None,
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaError(f"bad feature entry {doc!r}: {exc}") from None


@dataclass(frozen=True)
class Schema:
    features: tuple[FeatureSpec, ...]
    response_name: str

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise SchemaError("schema needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        if self.response_name in names:
            raise SchemaError("response name collides with a feature name")

    @property
    def d(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def subset(self, indices: Sequence[int]) -> "Schema":
        return Schema(tuple(self.features[i] for i in indices), self.response_name)

    def fingerprint(self) -> str:
        """Hash of feature names and kinds, in order."""
        payload = json.dumps([[f.name, f.kind.value] for f in self.features])
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {"features": [f.to_dict() for f in self.features], "response": self.response_name}

    @classmethod
    def from_dict(cls, doc: dict) -> "Schema":
        if not isinstance(doc, dict) or "features" not in doc or "response" not in doc:
            raise SchemaError("schema document needs 'features' and 'response'")
        return cls(tuple(FeatureSpec.from_dict(f) for f in doc["features"]), str(doc["response"]))


def load_schema(path: str | Path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    return Schema.from_dict(doc)


def save_schema(schema: Schema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


def retained_schema() -> Schema:
    """The 16 retained household variables with their declared ranges."""
    text = resources.files("shopdemand.resources").joinpath("retained_schema.json").read_text("utf-8")
    return Schema.from_dict(json.loads(text))


def _check_value(spec: FeatureSpec, value: float, row: int, token: str | None = None) -> None:
    if spec.kind is FeatureKind.BINARY and value not in (0.0, 1.0):
        raise TypeViolation(row, spec.name, token if token is not None else repr(value))
    if spec.kind is FeatureKind.DISCRETE and spec.allowed_values is not None:
        if value not in spec.allowed_values:
            raise DomainViolation(row, spec.name, value)


@dataclass
class Dataset:
    """Feature matrix ``x`` (N x d), response ``y`` (N,), and their schema."""

    schema: Schema
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape[1] != self.schema.d:
            raise SchemaError(f"x must be N x {self.schema.d}, got {self.x.shape}")
        if self.y.shape != (self.x.shape[0],):
            raise SchemaError("y length must match the number of rows of x")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def validate(self) -> None:
        """Check every cell against its column's kind constraints."""
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise SchemaError("dataset contains non-finite values")
        for j, spec in enumerate(self.schema.features):
            col = self.x[:, j]
            if spec.kind is FeatureKind.BINARY:
                bad = np.nonzero((col != 0.0) & (col != 1.0))[0]
            elif spec.kind is FeatureKind.DISCRETE and spec.allowed_values is not None:
                bad = np.nonzero(~np.isin(col, spec.allowed_values))[0]
            else:
                continue
            if bad.size:
                _check_value(spec, float(col[bad[0]]), int(bad[0]) + 1)

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.schema, self.x[rows], self.y[rows])

    def select_features(self, indices: Sequence[int]) -> "Dataset":
        indices = list(indices)
        return Dataset(self.schema.subset(indices), self.x[:, indices], self.y)


# --- CSV -------------------------------------------------------------------


def load_csv(path: str | Path, schema: Schema) -> Dataset:
    """Read a headered CSV, reordering columns to schema order.

    Rows are numbered from 1 (first data row) in error messages.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return _read_rows(csv.reader(fh), schema)


def read_csv_text(text: str, schema: Schema) -> Dataset:
    return _read_rows(csv.reader(io.StringIO(text)), schema)


def _read_rows(reader, schema: Schema) -> Dataset:
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MissingColumn(schema.features[0].name) from None
    wanted = schema.names + [schema.response_name]
    positions = []
    for name in wanted:
        if name not in header:
            raise MissingColumn(name)
        positions.append(header.index(name))

    specs = list(schema.features) + [None]
    x_rows, y_vals = [], []
    for row_no, row in enumerate(reader, start=1):
        if not row:
            continue
        values = []
        for name, pos, spec in zip(wanted, positions, specs):
            token = row[pos].strip() if pos < len(row) else ""
            if token == "":
                raise MissingValue(row_no, name)
            try:
                value = float(token)
            except ValueError:
                raise TypeViolation(row_no, name, token) from None
            if not math.isfinite(value):
                raise TypeViolation(row_no, name, token)
            if spec is not None:
                _check_value(spec, value, row_no, token)
            values.append(value)
        x_rows.append(values[:-1])
        y_vals.append(values[-1])

    x = np.array(x_rows, dtype=np.float64).reshape(len(x_rows), schema.d)
    return Dataset(schema, x, np.array(y_vals, dtype=np.float64))


def format_real(value: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(value))


def csv_text(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(dataset.schema.names + [dataset.schema.response_name])
    for xi, yi in zip(dataset.x, dataset.y):
        writer.writerow([format_real(v) for v in xi] + [format_real(yi)])
    return buf.getvalue()


def write_csv(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(csv_text(dataset), encoding="utf-8")


# --- encoding and summaries -------------------------------------------------


def midpoint_encode(range_low: float, range_high: float) -> float:
    """Encode a range-coded survey answer by the middle of its range."""
    if range_low > range_high:
        raise InvalidRange(f"range_low {range_low} > range_high {range_high}")
    return (range_low + range_high) / 2


class ColumnSummary(NamedTuple):
    min: float
    max: float
    mean: float
    std: float


def summarize(dataset: Dataset) -> dict[str, ColumnSummary]:
    """Per-feature min, max, mean and population standard deviation."""
    out = {}
    for j, name in enumerate(dataset.schema.names):
        col = dataset.x[:, j]
        out[name] = ColumnSummary(float(col.min()), float(col.max()),
                                  float(col.mean()), float(col.std()))
    return out


# --- splitting ---------------------------------------------------------------


@dataclass(frozen=True)
class SplitIndices:
    train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]
    seed: int

    def to_dict(self) -> dict:
        return {"seed": self.seed, "train": list(self.train),
                "validation": list(self.validation), "test": list(self.test)}

    @classmethod
    def from_dict(cls, doc: dict) -> "SplitIndices":
        return cls(tuple(doc["train"]), tuple(doc["validation"]), tuple(doc["test"]), int(doc["seed"]))


def split(dataset: Dataset | int, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> SplitIndices:
    """Shuffle row indices and cut them into train / validation / test.

    Train and validation sizes are ``floor(f * N)``; test takes the remainder.
    Each returned index list is sorted ascending.
    """
    n = dataset if isinstance(dataset, int) else dataset.n
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(not f > 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise BadFractions(f"fractions must be three positive reals summing to 1, got {fractions}")
    n_train = math.floor(fr[0] * n)
    n_val = math.floor(fr[1] * n)
    perm = np.random.default_rng(seed).permutation(n)
    parts = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
    return SplitIndices(*(tuple(int(i) for i in np.sort(p)) for p in parts), seed=seed)


def holdout(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two-way shuffle split: ``floor(train_fraction * n)`` rows go to train."""
    if not 0 < train_fraction < 1:
        raise BadFractions(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = math.floor(train_fraction * n)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def kfold(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Partition ``range(n)`` into ``k`` shuffled folds whose sizes differ by at most one."""
    if not 2 <= k <= n:
        raise BadK(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


# --- synthetic households ----------------------------------------------------


@dataclass
class SynthConfig:
    """Parameters of the synthetic household generator.

    The latent mean is ``intercept + sum_j c_j * g_j(x_j)`` plus optional
    product terms ``c * x_a * x_b`` and step terms ``c * 1[x_f > cut]``;
    ``g_j`` is ``log(1 + x / s)`` for features listed in ``log_scale`` and
    the identity otherwise.  The response is ``max(0, round(mean + noise))``.
    """

    n: int = 2000
    seed: int = 0
    noise_sd: float = 1.0
    intercept: float = 0.0
    coefficients: dict[str, float] = field(default_factory=dict)
    log_scale: dict[str, float] = field(default_factory=dict)
    binary_rates: dict[str, float] = field(default_factory=dict)
    product_terms: list[tuple[str, str, float]] = field(default_factory=list)
    step_terms: list[tuple[str, float, float]] = field(default_factory=list)
    round_response: bool = True

    def to_dict(self) -> dict:
        return {
            "n": self.n, "seed": self.seed, "noise_sd": self.noise_sd,
            "intercept": self.intercept, "coefficients": dict(self.coefficients),
            "log_scale": dict(self.log_scale), "binary_rates": dict(self.binary_rates),
            "product_terms": [list(t) for t in self.product_terms],
            "step_terms": [list(t) for t in self.step_terms],
            "round_response": self.round_response,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        known = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        cfg = cls(**known)
        cfg.product_terms = [tuple(t) for t in cfg.product_terms]
        cfg.step_terms = [tuple(t) for t in cfg.step_terms]
        return cfg


def default_synth_config() -> SynthConfig:
    text = resources.files("shopdemand.resources").joinpath("default_synth.json").read_text("utf-8")
    return SynthConfig.from_dict(json.loads(text))


def sample_features(schema: Schema, n: int, rng: np.random.Generator,
                    binary_rates: dict[str, float] | None = None) -> np.ndarray:
    """Draw each feature independently within its declared range."""
    binary_rates = binary_rates or {}
    x = np.empty((n, schema.d))
    for j, spec in enumerate(schema.features):
        if spec.kind is FeatureKind.BINARY:
            x[:, j] = (rng.random(n) < binary_rates.get(spec.name, 0.5)).astype(np.float64)
        elif spec.kind is FeatureKind.DISCRETE:
            if spec.allowed_values is not None:
                levels = np.asarray(spec.allowed_values)
            else:
                levels = np.arange(math.ceil(spec.declared_min), math.floor(spec.declared_max) + 1,
                                   dtype=np.float64)
            x[:, j] = levels[rng.integers(0, levels.size, size=n)]
        else:
            x[:, j] = rng.uniform(spec.declared_min, spec.declared_max, size=n)
    return x


def latent_mean(x: np.ndarray, schema: Schema, config: SynthConfig) -> np.ndarray:
    mu = np.full(x.shape[0], float(config.intercept))
    for name, coef in config.coefficients.items():
        col = x[:, schema.index(name)]
        scale = config.log_scale.get(name)
        mu += coef * (np.log1p(col / scale) if scale else col)
    for a, b, coef in config.product_terms:
        mu += coef * x[:, schema.index(a)] * x[:, schema.index(b)]
    for name, cut, coef in config.step_terms:
        mu += coef * (x[:, schema.index(name)] > cut)
    return mu


def synth(config: SynthConfig, schema: Schema | None = None) -> Dataset:
    """Generate a seeded synthetic household dataset with known latent mean."""
    if config.n < 1:
        raise ValueError("n must be at least 1")
    schema = schema or retained_schema()
    rng = np.random.default_rng(config.seed)
    x = sample_features(schema, config.n, rng, config.binary_rates)
    mu = latent_mean(x, schema, config)
    noisy = mu + rng.normal(0.0, 1.0, size=config.n) * config.noise_sd
    y = np.maximum(0.0, np.round(noisy)) if config.round_response else noisy
    return Dataset(schema, x, y)
