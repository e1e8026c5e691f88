from __future__ import annotations

import itertools

import numpy as np
import pytest

from shopdemand.data import Dataset, FeatureSpec, Schema


def continuous_schema(d: int, lo: float = 0.0, hi: float = 1.0, prefix: str = "x") -> Schema:
    return Schema(tuple(FeatureSpec(f"{prefix}{j + 1}", "continuous", lo, hi) for j in range(d)), "y")


def make_dataset(x, y, schema: Schema | None = None) -> Dataset:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    schema = schema or continuous_schema(x.shape[1], float(min(x.min(), 0)), float(max(x.max(), 1)))
    return Dataset(schema, x, np.asarray(y, dtype=np.float64))


def order_oracle(f, xi, bg):
    """Shapley values as the average marginal contribution over all d! orderings."""
    d = xi.size

    def value(coalition):
        h = bg.copy()
        h[:, list(coalition)] = xi[list(coalition)]
        return f(h).mean()

    phi = np.zeros(d)
    perms = list(itertools.permutations(range(d)))
    for perm in perms:
        seen = []
        for j in perm:
            before = value(seen)
            seen.append(j)
            phi[j] += value(seen) - before
    return phi / len(perms)


def random_model(rng, d):
    """A small nonlinear function with interactions, as a batched callable."""
    a = rng.normal(size=d)
    b = rng.normal(size=(d, d))

    def f(x):
        return x @ a + np.einsum("ij,jk,ik->i", x, np.triu(b, 1), x) + np.sin(x[:, 0] * x[:, -1])
    return f


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
