"""Acceptance criteria 1-9.

Each test records one PASS/FAIL line (shown in the terminal summary) with
the measured quantities, then asserts the verdict. Criteria 6-9 train full
models with the bundled default configs and take tens of minutes on one
CPU core.
"""

import itertools
import math
import time

import numpy as np
import pytest
import torch

from conftest import derivative_errors, random_measure
from neural_measures.config import default_config
from neural_measures.loss import draw_batch, residual_loss
from neural_measures.measures import AnalyticMeasure
from neural_measures.metrics import (
    empirical_wasserstein_1d,
    ensemble_moments,
    error_heatmap,
    relative_l2_error,
    wasserstein_over_time,
)
from neural_measures.pce import build_basis, gauss_legendre_gram
from neural_measures.problems import get_problem, reference_ensemble, solve_reaction_diffusion_reference
from neural_measures.train import train

N_ENSEMBLE = 10_000
REFERENCE_SEED = 0
MODEL_SEED = 12345


def _timed_train(config, run_dir):
    start = time.perf_counter()
    measure, record = train(config, run_dir=run_dir)
    return measure, record, time.perf_counter() - start


@pytest.fixture(scope="module")
def bistable_runs(tmp_path_factory):
    """Two default bistable runs with identical seeds (criteria 6 and 9)."""
    config = default_config("bistable")
    root = tmp_path_factory.mktemp("bistable")
    return config, [_timed_train(config, root / name) + (root / name,) for name in ("first", "second")]


@pytest.mark.criterion(1)
def test_pce_orthonormality(verdict):
    start = time.perf_counter()
    basis = build_basis(2, 5)
    err = np.max(np.abs(gauss_legendre_gram(basis) - np.eye(basis.cardinality)))
    elapsed = time.perf_counter() - start
    verdict(basis.cardinality == 21 and err <= 1e-10 and elapsed < 1.0,
            f"K={basis.cardinality}, max|G-I|={err:.2e} (<=1e-10), {elapsed:.2f}s (<1s)")


@pytest.mark.criterion(2)
def test_derivative_oracle(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    names = ("diffusion", "reaction_diffusion")
    variants = ("fullnn", "pce_nn", "galerkin_nn")
    worst = 0.0
    for trial in range(100):
        problem = get_problem(names[trial % 2])
        m = random_measure(rng, problem, variants[trial % 3], seed=trial)
        (x0, x1), (t0, t1) = problem.domain.space_interval, problem.domain.time_interval
        x = rng.uniform(x0 + 0.05 * (x1 - x0), x1 - 0.05 * (x1 - x0))
        t = rng.uniform(t0 + 0.05 * (t1 - t0), t1 - 0.05 * (t1 - t0))
        xi = problem.params.sample(1, rng)[0]
        worst = max(worst, max(derivative_errors(m, x, t, xi).values()))
    elapsed = time.perf_counter() - start
    verdict(worst < 1e-5 and elapsed < 30,
            f"100 pairs over 3 variants, worst relative error {worst:.2e} (<1e-5), {elapsed:.1f}s (<30s)")


@pytest.mark.criterion(3)
def test_exact_solution_zero_loss(verdict):
    start = time.perf_counter()
    problem = get_problem("diffusion")
    # 1000 interior, boundary and initial points, each paired with its own parameter draw
    batch = draw_batch(problem, 1000, 1, 1000, 1000, 1000, "uniform_random", 3, 4)
    with torch.no_grad():
        loss = float(residual_loss(AnalyticMeasure(problem), problem, batch, coupling="paired"))
    elapsed = time.perf_counter() - start
    verdict(0 <= loss < 1e-10 and elapsed < 5, f"loss={loss:.2e} (<1e-10), {elapsed:.2f}s (<5s)")


@pytest.mark.criterion(4)
def test_wasserstein_axioms(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    exact = True
    for n in (1, 2, 3, 4):
        for _ in range(100):
            a = rng.integers(-6, 7, n).astype(float)
            b = rng.integers(-6, 7, n).astype(float)
            for p in (1, 2):
                best = min(sum(abs(a[i] - b[j]) ** p for i, j in enumerate(perm))
                           for perm in itertools.permutations(range(n)))
                exact &= empirical_wasserstein_1d(a, b, p) == (best / n) ** (1 / p)
    symmetric, triangle = True, True
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        a, b, c = rng.normal(size=(3, n)) * rng.uniform(0.1, 10)
        ab = empirical_wasserstein_1d(a, b)
        symmetric &= ab == empirical_wasserstein_1d(b, a)
        triangle &= ab <= empirical_wasserstein_1d(a, c) + empirical_wasserstein_1d(c, b) + 1e-12
    elapsed = time.perf_counter() - start
    verdict(exact and symmetric and triangle and elapsed < 10,
            f"brute force exact={exact}, symmetry={symmetric}, triangle={triangle}, {elapsed:.1f}s (<10s)")


@pytest.mark.criterion(5)
def test_bistable_reference_dynamics(verdict):
    start = time.perf_counter()
    ref = reference_ensemble("bistable", N_ENSEMBLE, REFERENCE_SEED, t_values=[0.0, 8.0])
    u0, end = ref.values[:, 0], ref.values[:, 1]
    near = np.minimum(np.abs(end - 1), np.abs(end - 3)) <= 0.05
    frac_near = near.mean()
    frac_low = (np.abs(end - 1) <= 0.05).mean()
    se = math.sqrt(0.25 / N_ENSEMBLE)
    elapsed = time.perf_counter() - start
    verdict(frac_near >= 0.95 and abs(frac_low - 0.5) <= 3 * se and elapsed < 120,
            f"{frac_near:.2%} within 0.05 of {{1,3}} (>=95%), fraction at 1 = {frac_low:.4f} "
            f"(0.5 +- {3 * se:.3f}); empirical P(u0<2) = {(u0 < 2).mean():.4f}, {elapsed:.1f}s (<120s)")


@pytest.mark.slow
@pytest.mark.criterion(6)
def test_bistable_training(bistable_runs, verdict):
    config, runs = bistable_runs
    measure, record, seconds, _ = runs[0]
    start = time.perf_counter()
    grid = np.linspace(0.0, 8.0, 33)
    ref = reference_ensemble("bistable", N_ENSEMBLE, REFERENCE_SEED, t_values=grid)
    model = measure.sample_pushforward(problem_params(measure).sample(N_ENSEMBLE, MODEL_SEED), None, grid)
    times, w = wasserstein_over_time(model, ref, [1.0, 2.0, 8.0])
    seconds += time.perf_counter() - start
    w1, w2, w8 = w
    ratio = record.train_loss[-1] / record.train_loss[0]
    window = overfit_window(record)
    seen = "none" if window is None else f"iterations {window[0]}-{window[1]}"
    verdict(ratio <= 0.1 and w2 <= 0.15 and w8 >= w1 and seconds < 20 * 60,
            f"loss {record.train_loss[0]:.3g} -> {record.train_loss[-1]:.3g} (ratio {ratio:.2e} <= 0.1), "
            f"W1(t=2)={w2:.3f} (<=0.15), W1(t=1)={w1:.3f} <= W1(t=8)={w8:.3f}, {seconds / 60:.1f} min (<20); "
            f"overfit window (test rising, train falling, not gated): {seen}")


@pytest.mark.slow
def test_bistable_regression_at_200(bistable_runs):
    # the first 200 rows of a seeded run equal a 200-iteration run
    record = bistable_runs[1][0][1]
    assert record.train_loss[200] <= 0.1 * record.train_loss[0]


def problem_params(measure):
    return measure.problem.params


def overfit_window(record, width=100, step=25):
    """First window where the log test loss trends up while the log train loss trends down."""
    it = np.asarray(record.iteration, dtype=float)
    train, test = np.log(record.train_loss), np.log(record.test_loss)
    for lo in range(1, len(it) - width + 1, step):
        sl = slice(lo, lo + width)
        if np.polyfit(it[sl], test[sl], 1)[0] > 0 and np.polyfit(it[sl], train[sl], 1)[0] < 0:
            return int(it[lo]), int(it[lo + width - 1])
    return None


@pytest.mark.slow
@pytest.mark.criterion(9)
def test_determinism(bistable_runs, verdict):
    _, runs = bistable_runs
    (_, rec_a, _, dir_a), (_, rec_b, _, dir_b) = runs
    same_bytes = (dir_a / "losses.csv").read_bytes() == (dir_b / "losses.csv").read_bytes()
    same_cols = rec_a.train_loss == rec_b.train_loss and rec_a.test_loss == rec_b.test_loss
    verdict(same_bytes and same_cols,
            f"losses.csv bitwise identical={same_bytes} over {len(rec_a)} rows; "
            f"record loss columns identical={same_cols} (seconds column is wall-clock)")


@pytest.mark.slow
@pytest.mark.criterion(7)
def test_diffusion_training(tmp_path, verdict):
    ref = reference_ensemble("diffusion", N_ENSEMBLE, REFERENCE_SEED)
    ref_mean = ensemble_moments(ref)[0]
    total = 0.0
    errors, final_train, final_test = {}, {}, {}
    for variant in ("fullnn", "pce_nn"):
        config = default_config("diffusion", variant=variant, architecture__pce_degree=5)
        measure, record, seconds = _timed_train(config, tmp_path / variant)
        xi = measure.problem.params.sample(N_ENSEMBLE, MODEL_SEED)
        model = measure.sample_pushforward(xi, ref.x, ref.t)
        errors[variant] = relative_l2_error(ensemble_moments(model)[0], ref_mean)
        # average over the last 100 iterations smooths resampling spikes
        final_train[variant] = float(np.mean(record.train_loss[-100:]))
        final_test[variant] = float(np.mean(record.test_loss[-100:]))
        total += seconds
    pce_higher = final_train["pce_nn"] > final_train["fullnn"] and final_test["pce_nn"] > final_test["fullnn"]
    verdict(max(errors.values()) <= 0.05 and total < 45 * 60,
            f"mean-field rel L2: fullnn {errors['fullnn']:.2%}, pce_nn {errors['pce_nn']:.2%} (<=5%); "
            f"train loss fullnn {final_train['fullnn']:.2e} vs pce_nn {final_train['pce_nn']:.2e}, "
            f"test {final_test['fullnn']:.2e} vs {final_test['pce_nn']:.2e} "
            f"(pce_nn higher: {pce_higher}; expected higher, not gated), {total / 60:.1f} min (<45)")


@pytest.mark.slow
@pytest.mark.criterion(8)
def test_reaction_diffusion(tmp_path, verdict):
    start = time.perf_counter()
    params = (0.75, 3.5, 0.5, 2.5)
    finals = []
    for nx, nt in ((40, 40), (80, 80), (160, 160)):
        _, _, field = solve_reaction_diffusion_reference(*params, nx=nx, nt=nt, keep=[nt])
        finals.append(field[0, -1, :: nx // 40])
    order = math.log2(np.max(np.abs(finals[0] - finals[1])) / np.max(np.abs(finals[1] - finals[2])))

    config = default_config("reaction_diffusion")
    measure, _, _ = _timed_train(config, tmp_path / "run")
    ref = reference_ensemble("reaction_diffusion", N_ENSEMBLE, REFERENCE_SEED)
    xi = measure.problem.params.sample(N_ENSEMBLE, MODEL_SEED)
    model = measure.sample_pushforward(xi, ref.x, ref.t)
    (m_mean, m_std), (r_mean, r_std) = ensemble_moments(model), ensemble_moments(ref)
    p95_mean = float(np.percentile(error_heatmap(m_mean, r_mean), 95))
    p95_std = float(np.percentile(error_heatmap(m_std, r_std), 95))
    elapsed = time.perf_counter() - start
    verdict(order >= 1.9 and p95_mean <= 0.1 and p95_std <= 0.1 and elapsed < 60 * 60,
            f"self-convergence order {order:.2f} (>=1.9), heatmap 95th percentile: mean {p95_mean:.3f}, "
            f"std {p95_std:.3f} (<=0.1), {elapsed / 60:.1f} min (<60)")
