"""Acceptance criteria for the shopdemand package.

Each criterion is a plain function that raises AssertionError on failure and
returns a one-line summary of what it measured.  The pytest wrappers time it
against its budget and record a PASS/FAIL line, printed in the terminal
summary.  Running this file directly prints the same lines without pytest.
"""

from __future__ import annotations

import contextlib
import io
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from shopdemand import data, gbm, metrics, selection
from shopdemand.cli import main
from shopdemand.errors import NoModelPassesGate
from shopdemand.explain import ShapleyConfig, ale_binary, ale_curve, shapley_attributions
from shopdemand.gbm import GbmParams, HuberConfig

sys.path.insert(0, str(Path(__file__).parent))
from cli_pipeline import GOLDEN, INPUTS, outputs, run  # noqa: E402
from conftest import continuous_schema, make_dataset, random_model  # noqa: E402


def _close(got, want, tol):
    assert abs(got - want) <= tol, f"{got!r} != {want!r} (tol {tol})"


# --- 1. formula unit suite ---------------------------------------------------------

def formula_suite() -> str:
    cases = [
        (gbm.huber_loss(3, 1, 5), 2.0, 1e-9),
        (gbm.huber_loss(10, 1, 2), 16.0, 1e-9),
        (gbm.huber_loss(7, 7, 1), 0.0, 1e-9),
        (gbm.huber_neg_gradient(3, 1, 5), 2.0, 1e-9),
        (gbm.huber_neg_gradient(10, 1, 2), 2.0, 1e-9),
        (gbm.huber_neg_gradient(-10, 0, 3), -3.0, 1e-9),
        (gbm.resolve_delta([9.0, 1.0], HuberConfig.fixed(2.5)), 2.5, 1e-9),
        (gbm.resolve_delta([1, -3, 2], HuberConfig.quantile(1.0)), 3.0, 1e-9),
        (gbm.resolve_delta([1, -3, 2], HuberConfig.quantile(0.5)), 2.0, 1e-9),
        (gbm.init_f0([5, 5, 5], HuberConfig.fixed(1.0)), 5.0, 1e-9),
        (metrics.r_squared([1, 2, 3], [1, 2, 3]), 1.0, 1e-9),
        (metrics.r_squared([1, 2, 3], [2, 2, 2]), 0.0, 1e-9),
        (metrics.r_squared([0, 2, 4], [1, 2, 3]), 0.75, 1e-9),
        (metrics.rmse([1, 5, -2], [1, 5, -2]), 0.0, 1e-9),
        (metrics.rmse([1, 5, -2], [2, 6, -1]), 1.0, 1e-9),
        (metrics.rmse([0, 0], [3, 4]), 3.5355, 1e-4),
    ]
    for got, want, tol in cases:
        _close(float(got), want, tol)
    return f"{len(cases)} examples reproduced"


# --- 2. boosting descent -----------------------------------------------------------

def boosting_descent() -> str:
    delta = 1.5
    violations = 0
    for seed in range(5):
        cfg = data.default_synth_config()
        cfg.n, cfg.seed = 500, seed
        ds = data.synth(cfg)
        model = gbm.fit(ds, GbmParams(200, 4, 5, 0.1, HuberConfig.fixed(delta)))
        losses = [gbm.total_huber_loss(ds.y, p, delta) for p in gbm.staged_predict(model, ds.x)]
        assert len(losses) == 201
        violations += sum(b > a for a, b in zip(losses, losses[1:]))
    assert violations == 0, f"{violations} stages increased the loss"
    return "5 datasets x 200 stages, 0 violations"


# --- 3. quadratic-limit oracle -----------------------------------------------------

def quadratic_limit() -> str:
    worst, stages = 0.0, 0
    for seed, n in enumerate((12, 20, 35, 50, 50)):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, 3))
        y = np.sin(2 * x[:, 0]) + x[:, 1] * x[:, 2] + rng.normal(size=n)
        delta = 10 * np.max(np.abs(y - y.mean()))
        model = gbm.fit(make_dataset(x, y, continuous_schema(3, -10, 10)),
                        GbmParams(20, 2, 2, 0.3, HuberConfig.fixed(delta)))
        preds = list(gbm.staged_predict(model, x))
        for m, stage in enumerate(model.stages):
            h = stage.tree.predict(x)
            closed = np.dot(y - preds[m], h) / np.dot(h, h)
            worst = max(worst, abs(stage.rho - closed))
            stages += 1
    assert worst <= 1e-6, f"max |rho - closed form| = {worst:.3g}"
    return f"{stages} stages, max |rho - closed form| = {worst:.2e}"


# --- 4. interpolation --------------------------------------------------------------

def interpolation() -> str:
    worst = 0.0
    for seed, n in enumerate((5, 17, 40, 64)):
        rng = np.random.default_rng(100 + seed)
        x = rng.normal(size=(n, 3))
        y = rng.normal(size=n) * 3
        model = gbm.fit(make_dataset(x, y, continuous_schema(3, -10, 10)),
                        GbmParams(1, n, 1, 1.0, HuberConfig.fixed(1e12)))
        worst = max(worst, float(np.max(np.abs(gbm.predict(model, x) - y))))
    assert worst <= 1e-9, f"max |F(x) - y| = {worst:.3g}"
    return f"4 datasets, max |F(x) - y| = {worst:.2e}"


# --- 5. model ordering -------------------------------------------------------------

ORDER_SCHEMA = continuous_schema(4, 0.0, 2.0)


def ordering_data(seed: int) -> data.Dataset:
    a, b, c, e = ORDER_SCHEMA.names
    cfg = data.SynthConfig(n=2000, seed=seed, noise_sd=0.5, coefficients={a: 1.0, b: 1.0, e: 0.5},
                           product_terms=[(a, b, 1.5)], step_terms=[(c, 1.0, 2.0)],
                           round_response=False)
    return data.synth(cfg, ORDER_SCHEMA)


def model_ordering() -> str:
    grid = selection.Grid((300,), (2, 3), (10,), (0.05,))
    wins, rows = 0, []
    for seed in range(10):
        ds = ordering_data(seed)
        idx = data.split(ds, seed=seed)
        train, val, test = (ds.take(list(i)) for i in (idx.train, idx.validation, idx.test))
        lin = metrics.fit_baseline(train, "linear")
        quad = metrics.fit_baseline(train, "quadratic")
        best = selection.select_best(selection.grid_search(train, val, grid))
        r2 = (metrics.r_squared(test.y, metrics.predict_baseline(lin, test.x)),
              metrics.r_squared(test.y, metrics.predict_baseline(quad, test.x)),
              metrics.r_squared(test.y, gbm.predict(best.model, test.x)))
        wins += r2[0] < r2[1] < r2[2]
        rows.append(r2)
    mean = np.mean(rows, axis=0)
    assert wins >= 9, f"ordering held in {wins}/10 seeds"
    return (f"linear < quadratic < GBM in {wins}/10 seeds "
            f"(mean test R^2 {mean[0]:.3f} / {mean[1]:.3f} / {mean[2]:.3f})")


# --- 6. overfit gate ---------------------------------------------------------------

def overfit_gate() -> str:
    grid = selection.Grid((100,), (2, 12), (1, 10), (0.05,))
    for seed in range(5):
        cfg = data.default_synth_config()
        cfg.n, cfg.seed = 2000, seed
        ds = data.synth(cfg)
        idx = data.split(ds, seed=seed)
        cands = selection.grid_search(ds.take(list(idx.train)), ds.take(list(idx.validation)), grid)
        overfit = [c for c in cands if c.params.max_depth == 12 and c.params.min_samples_leaf == 1]
        assert overfit[0].gap >= 0.1
        best = selection.select_best(cands)
        assert best.gap < 0.1
        assert (best.params.max_depth, best.params.min_samples_leaf) != (12, 1)

    # any candidate list: the selection is gated and is the first gated entry
    rng = np.random.default_rng(7)
    params = GbmParams(1, 1, 1, 0.1)
    trials = 0
    for _ in range(2000):
        n = int(rng.integers(1, 8))
        train = np.sort(rng.uniform(0.3, 1.0, n))[::-1]
        cands = [selection.CandidateResult(params, float(t), float(t - rng.uniform(0, 0.2)), None)
                 for t in train]
        try:
            best = selection.select_best(cands)
        except NoModelPassesGate:
            assert all(c.gap >= 0.1 for c in cands)
            continue
        assert best.gap < 0.1
        assert all(c.gap >= 0.1 for c in cands[:cands.index(best)])
        trials += 1
    return f"depth-12 leaf-1 point rejected on 5 datasets; {trials} random lists gated"


# --- 7. Shapley axioms -------------------------------------------------------------

def shapley_axioms() -> str:
    rng = np.random.default_rng(2024)
    instances = 0
    for d in (2, 3, 4, 5, 6):
        bg = rng.normal(size=(16, d))
        x = rng.normal(size=(40, d))
        f, g = random_model(rng, d), random_model(rng, d)
        cfg = ShapleyConfig(bg)
        out_f = shapley_attributions(f, x, cfg)
        np.testing.assert_allclose(out_f.baseline + out_f.phi.sum(axis=1), f(x), atol=1e-9)

        combo = shapley_attributions(lambda z: 1.5 * f(z) - 0.4 * g(z), x, cfg).phi
        np.testing.assert_allclose(combo, 1.5 * out_f.phi - 0.4 * shapley_attributions(g, x, cfg).phi,
                                   atol=1e-9)

        keep = [j for j in range(d) if j != d - 1]
        ignores_last = shapley_attributions(lambda z: f(np.column_stack([z[:, keep], bg[0, -1:]
                                                                         .repeat(len(z))])), x, cfg)
        assert np.all(ignores_last.phi[:, -1] == 0.0)

        # f_sym is symmetric in features 0 and 1; inputs have x_0 == x_1; background is exchangeable
        def f_sym(z):
            return f(z) + f(z[:, [1, 0] + list(range(2, d))])
        sym_bg = np.vstack([bg, bg[:, [1, 0] + list(range(2, d))]])
        xs = x.copy()
        xs[:, 1] = xs[:, 0]
        out = shapley_attributions(f_sym, xs, ShapleyConfig(sym_bg))
        np.testing.assert_allclose(out.phi[:, 0], out.phi[:, 1], atol=1e-9)
        instances += len(x)

    cfg = data.default_synth_config()
    cfg.n = 300
    ds = data.synth(cfg).select_features(range(6))
    model = gbm.fit(ds, GbmParams(30, 3, 5, 0.1))
    rows = ds.x[:20]
    out = shapley_attributions(model, rows, ShapleyConfig(ds.x[100:130]))
    np.testing.assert_allclose(out.baseline + out.phi.sum(axis=1), gbm.predict(model, rows), atol=1e-9)

    worst = 0.0
    for seed in range(10):
        r = np.random.default_rng(seed)
        f = random_model(r, 6)
        bg = r.normal(size=(20, 6))
        x = r.normal(size=(5, 6))
        exact = shapley_attributions(f, x, ShapleyConfig(bg)).phi
        approx = shapley_attributions(
            f, x, ShapleyConfig(bg, mode="permutation", n_permutations=500, seed=seed)).phi
        span = float(np.ptp(f(np.vstack([x, bg]))))
        err = float(np.max(np.abs(approx - exact))) / span
        worst = max(worst, err)
    assert worst < 0.05, f"permutation error {worst:.3f} of output range"
    return (f"{instances} instances (d = 2..6) satisfy all four axioms; "
            f"500-permutation error <= {worst:.3f} of range over 10 seeds")


# --- 8. ALE recovery ---------------------------------------------------------------

def conditional_mean_curve(f, x, j, edges):
    """Test oracle: mean prediction among rows whose x_j falls in each ALE bin, centered."""
    pred = f(x)
    k = np.clip(np.searchsorted(edges, x[:, j], side="left"), 1, edges.size - 1)
    means = np.array([pred[k == b].mean() for b in range(1, edges.size)])
    counts = np.bincount(k, minlength=edges.size)[1:]
    return means - np.dot(counts, means) / counts.sum()


def interventional_pdp(f, x, j, grid):
    out = []
    for v in grid:
        z = x.copy()
        z[:, j] = v
        out.append(f(z).mean())
    return np.array(out)


def ale_recovery() -> str:
    worst = 0.0
    checked = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        d = 3 + seed % 2
        x = rng.uniform(-2, 2, size=(500, d))
        coef = rng.normal(size=(d, 4))

        def f(z, coef=coef):
            return sum(np.polyval(coef[j], z[:, j]) for j in range(z.shape[1]))

        for j in range(d):
            curve = ale_curve(f, x, j, 30)
            u = np.polyval(coef[j], curve.edges)
            expected = u - np.dot(curve.counts, u[1:]) / curve.counts.sum()
            worst = max(worst, float(np.max(np.abs(curve.centered - expected))))
            checked += 1
    assert worst <= 1e-6, f"max edge error {worst:.3g}"

    rng = np.random.default_rng(99)
    x1 = rng.normal(size=400)
    x = np.column_stack([x1, rng.normal(size=400), x1])      # column 2 duplicates column 0

    def uses_first_two(z):
        return z[:, 0] ** 3 + 2 * z[:, 0] + z[:, 1]

    dup = ale_curve(uses_first_two, x, 2, 20)
    assert np.all(dup.centered == 0) and np.all(dup.uncentered == 0)
    oracle = conditional_mean_curve(uses_first_two, x, 2, dup.edges)
    oracle_size = float(np.max(np.abs(oracle)))
    assert oracle_size > 1.0, "conditional-mean oracle should attribute the correlated effect"
    flat = interventional_pdp(uses_first_two, x, 2, dup.edges)
    assert np.ptp(flat) == 0.0
    return (f"{checked} additive components within {worst:.1e}; unused duplicate ALE = 0 "
            f"while the conditional-mean oracle reaches {oracle_size:.2f}")


# --- 9. binary ALE -----------------------------------------------------------------

def binary_ale() -> str:
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = np.column_stack([rng.normal(size=300), rng.integers(0, 2, 300), rng.uniform(0, 5, 300)])

        def f(z):
            return np.sin(z[:, 0]) * 3 + 2.0 * z[:, 1] + np.log1p(z[:, 2])

        worst = max(worst, abs(ale_binary(f, x, 1).difference - 2.0))
    assert worst <= 1e-9, f"max |difference - 2| = {worst:.3g}"
    return f"5 datasets, max |difference - 2| = {worst:.1e}"


# --- 10. RFE recovery --------------------------------------------------------------

RFE_SCHEMA = continuous_schema(16, 0.0, 1.0)
INFORMATIVE = RFE_SCHEMA.names[:5]


def rfe_data(seed: int) -> data.Dataset:
    coefs = dict(zip(INFORMATIVE, (3.0, 2.5, 2.0, 1.5, 1.2)))
    cfg = data.SynthConfig(n=800, seed=seed, noise_sd=0.3, coefficients=coefs, round_response=False)
    return data.synth(cfg, RFE_SCHEMA)


def rfe_recovery() -> str:
    kept = []
    for seed in range(10):
        trace = selection.rfe(rfe_data(seed), selection.reduced_grid(), seed=seed,
                              background_size=50, explain_rows=50, n_permutations=10)
        chain = [set(it.features) for it in trace.iterations]
        for before, after in zip(chain, chain[1:]):
            assert after < before and len(before - after) == 1, "trace is not a shrinking chain"
        for it, nxt in zip(trace.iterations, trace.iterations[1:]):
            assert set(it.features) - set(nxt.features) == {it.removed}
        assert set(trace.final_features) in chain
        kept.append(len(set(trace.final_features) & set(INFORMATIVE)))
    good = sum(k >= 4 for k in kept)
    assert good >= 9, f"only {good}/10 seeds kept 4 or more informative features: {kept}"
    return f"{good}/10 seeds keep >= 4 of 5 informative features (kept {kept})"


# --- 11. determinism ---------------------------------------------------------------

def determinism() -> str:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        runs = []
        for name, jobs in (("a", 1), ("b", 1), ("c", 8)):
            codes = run(tmp / name, jobs)
            assert all(c == 0 for c in codes.values()), codes
            runs.append(outputs(tmp / name))
        assert runs[0] == runs[1], "two identical runs differ"
        diff = sorted(k for k in runs[0] if runs[0][k] != runs[2].get(k))
        assert not diff and runs[0].keys() == runs[2].keys(), f"--jobs 8 differs: {diff}"
    return f"{len(runs[0])} files byte-identical across runs and --jobs 1 / 8"


# --- 12. CLI goldens and exit codes ------------------------------------------------

def cli_goldens() -> str:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        codes = run(tmp / "run")
        assert all(c == 0 for c in codes.values()), codes
        got, want = outputs(tmp / "run"), outputs(GOLDEN)
        assert got.keys() == want.keys()
        diff = sorted(k for k in want if got[k] != want[k])
        assert not diff, f"differs from golden: {diff}"

        schema = ["--schema", str(INPUTS / "schema.json")]
        work = tmp / "run"
        bad_cfg = tmp / "bad.json"
        bad_cfg.write_text('{"unknown-key": 1}')
        expected = [
            (["train", "--data", str(tmp / "missing.csv"), "--out", str(tmp / "m.json")], 1),
            (["train", "--data", str(work / "train.csv"), "--out", str(tmp / "m.json")], 1),
            (["grid", *schema, "--data", str(work / "train.csv"), "--val",
              str(work / "validation.csv"), "--grid", str(INPUTS / "grid.json"), "--gap", "0",
              "--out", str(tmp / "g.json")], 1),
            (["--config", str(bad_cfg), "train"], 1),
            (["train"], 2),
            (["train", "--trees", "many"], 2),
            (["frobnicate"], 2),
            (["train", "--help"], 0),
        ]
        sink = io.StringIO()
        with contextlib.redirect_stdout(sink), contextlib.redirect_stderr(sink):
            results = [(argv, main(argv), want) for argv, want in expected]
        wrong = [(argv[0], got_, want_) for argv, got_, want_ in results if got_ != want_]
        assert not wrong, f"unexpected exit codes: {wrong}"
    return f"{len(want)} golden files match; {len(expected)} exit-code cases as documented"


# --- harness -----------------------------------------------------------------------

CRITERIA = [
    ("formula unit suite", formula_suite, 1.0),
    ("boosting descent", boosting_descent, 30.0),
    ("quadratic-limit oracle", quadratic_limit, 5.0),
    ("interpolation", interpolation, None),
    ("model ordering", model_ordering, 120.0),
    ("overfit gate", overfit_gate, None),
    ("Shapley axioms", shapley_axioms, 60.0),
    ("ALE recovery", ale_recovery, 30.0),
    ("binary ALE", binary_ale, None),
    ("RFE recovery", rfe_recovery, 300.0),
    ("determinism", determinism, None),
    ("CLI goldens and exit codes", cli_goldens, None),
]


def evaluate(name, fn, budget) -> tuple[bool, str]:
    start = time.perf_counter()
    try:
        detail = fn()
        ok = True
    except AssertionError as exc:
        detail, ok = f"{exc}".splitlines()[0] if str(exc) else "assertion failed", False
    elapsed = time.perf_counter() - start
    timing = f"{elapsed:.2f}s" + (f" (budget {budget:g}s)" if budget else "")
    if budget is not None and elapsed >= budget:
        ok = False
        detail += "; over time budget"
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail} [{timing}]"
    return ok, line


@pytest.mark.parametrize("name,fn,budget", CRITERIA, ids=[c[0].replace(" ", "_") for c in CRITERIA])
def test_criterion(name, fn, budget, acceptance_log):
    ok, line = evaluate(name, fn, budget)
    acceptance_log.append(line)
    print(line)
    assert ok, line


if __name__ == "__main__":
    results = [evaluate(*c) for c in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
