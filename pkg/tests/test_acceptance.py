"""Acceptance checks, one test per criterion.

Each test appends a PASS/FAIL line to the terminal summary before asserting,
so the report is complete even when some criteria fail. The Monte-Carlo
checks take minutes; the full-size reproduction only runs with
MTCOV_FULL_SCALE=1.
"""

import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, make_problem
from mtcov.bench import CvSpec, run_experiment, scaling_study
from mtcov.data import PenaltyPair, dumps_json
from mtcov.estimators import estimate_mm, estimate_oracle, estimate_proposed
from mtcov.interaction import interaction_matrix
from mtcov.simgen import ScenarioSpec, make_full_rank_S, make_rng, noise_factor, sample_dataset
from mtcov.solver import alpha_max, fit, kkt_violation
from oracles import brute_force_a_hat, elastic_net_df_scalar, ridge, scalar_noise_variance


def record(num, name, ok, detail, elapsed):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] #{num:<2} {name}: {detail} ({elapsed:.1f}s)")
    assert ok, detail


def test_01_solver_optimality():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_kkt, monotone = 0.0, True
    for i in range(20):
        x, y, _ = make_problem(rng, 60, 25, 4, k=6)
        r = (0.2, 0.5, 0.8, 1.0)[i % 4]
        pen = PenaltyPair.from_alpha(rng.uniform(0.02, 0.5) * alpha_max(x, y, r), r)
        res = fit(x, y, pen, tol=1e-10)
        worst_kkt = max(worst_kkt, kkt_violation(x, y, res) if res.converged else np.inf)
        tr = res.objective_trace
        monotone &= bool(np.all(np.diff(tr) <= 1e-12 * np.abs(tr[:-1])))
    elapsed = time.perf_counter() - start
    ok = worst_kkt <= 1e-6 and monotone and elapsed < 10
    record(1, "solver optimality", ok, f"max KKT {worst_kkt:.2e}, monotone={monotone}", elapsed)


def test_02_ridge_closed_form():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    x, y, _ = make_problem(rng, 30, 10, 3)
    tau = 0.3
    res = fit(x, y, PenaltyPair(0.0, tau), tol=1e-14)
    err_b = np.abs(res.b_hat - ridge(x, y, tau)).max()
    df = np.trace(np.linalg.solve(x.T @ x + 30 * tau * np.eye(10), x.T @ x))
    err_a = np.abs(interaction_matrix(x, res).a_hat - df * np.eye(3)).max()
    elapsed = time.perf_counter() - start
    ok = err_b <= 1e-8 and err_a <= 1e-8 and elapsed < 1
    record(2, "ridge closed form", ok, f"coef err {err_b:.1e}, A err {err_a:.1e}", elapsed)


def test_03_brute_force_interaction():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(300 + seed)
        p, t = int(rng.integers(3, 9)), int(rng.integers(1, 4))
        x, y, _ = make_problem(rng, 14, p, t, k=max(1, p // 2))
        r = (0.5, 1.0)[seed % 2]
        res = fit(x, y, PenaltyPair.from_alpha(0.3 * alpha_max(x, y, r), r), tol=1e-13)
        ref = brute_force_a_hat(x, res.b_hat, res.penalty.lam, res.penalty.tau)
        worst = max(worst, np.abs(interaction_matrix(x, res).a_hat - ref).max())
    elapsed = time.perf_counter() - start
    record(3, "brute-force A equivalence", worst <= 1e-8 and elapsed < 5, f"max err {worst:.1e}", elapsed)


def test_04_single_task_reduction():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(400 + seed)
        n, p = 60, 30
        x, y, _ = make_problem(rng, n, p, 1, k=5)
        sigma = 0.4 ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
        r = (0.6, 1.0)[seed % 2]
        res = fit(x, y, PenaltyPair.from_alpha(0.15 * alpha_max(x, y, r), r), tol=1e-13)
        df = elastic_net_df_scalar(x, res.b_hat[:, 0], res.penalty.tau)
        ref = scalar_noise_variance(x, y[:, 0], res.b_hat[:, 0], df, sigma)
        got = estimate_proposed(x, y, res, interaction_matrix(x, res).a_hat, sigma).s_hat[0, 0]
        worst = max(worst, abs(got - ref) / abs(ref))
    elapsed = time.perf_counter() - start
    record(4, "T=1 reduction", worst <= 1e-10 and elapsed < 5, f"max rel err {worst:.1e}", elapsed)


def test_05_zero_fit_identity():
    start = time.perf_counter()
    ds = sample_dataset(ScenarioSpec(n=80, p=60, T=4, seed=5))
    x, y, sigma = ds.x, ds.y, ds.sigma
    n, p = x.shape
    res = fit(x, y, PenaltyPair.from_alpha(alpha_max(x, y, 0.9), 0.9))
    a_hat = interaction_matrix(x, res).a_hat
    s_hat = estimate_proposed(x, y, res, a_hat, sigma).s_hat
    quad = y.T @ x @ np.linalg.solve(sigma, x.T @ y)
    expected = (n + p) / n**2 * (y.T @ y) - quad / n**2
    err = np.abs(s_hat - expected).max() / np.abs(expected).max()
    # the same quadratic forms with n + 1 in place of n give the moment estimator
    mm_rebuilt = (n + 1 + p) / (n * (n + 1)) * (y.T @ y) - quad / (n * (n + 1))
    err_mm = np.abs(estimate_mm(x, y, sigma).s_hat - mm_rebuilt).max() / np.abs(mm_rebuilt).max()
    elapsed = time.perf_counter() - start
    ok = not a_hat.any() and err <= 1e-10 and err_mm <= 1e-10 and elapsed < 1
    record(5, "zero-fit identity", ok, f"A=0: {not a_hat.any()}, rel err {err:.1e}, mm rel err {err_mm:.1e}",
           elapsed)


def test_06_oracle_risk():
    start = time.perf_counter()
    n, t, reps = 200, 3, 2000
    s = make_full_rank_S(t)
    w = noise_factor(s)
    sq = np.empty(reps)
    for i in range(reps):
        e = make_rng(6, i, 3).standard_normal((n, w.shape[0])) @ w
        sq[i] = np.sum((estimate_oracle(e).s_hat - s) ** 2)
    theory = (np.trace(s) ** 2 + np.trace(s @ s)) / n
    rel = abs(sq.mean() - theory) / theory
    elapsed = time.perf_counter() - start
    record(6, "oracle risk formula", rel <= 0.05 and elapsed < 30,
           f"MC {sq.mean():.5f} vs theory {theory:.5f} (rel {rel:.3f})", elapsed)


@pytest.mark.slow
def test_07_mm_unbiased():
    start = time.perf_counter()
    spec = ScenarioSpec(n=100, p=150, T=3, seed=7)
    reps = 2000
    stack = np.empty((reps, 3, 3))
    for i in range(reps):
        ds = sample_dataset(spec, i)
        stack[i] = estimate_mm(ds.x, ds.y, ds.sigma).s_hat
    s = make_full_rank_S(3)
    z = np.abs(stack.mean(axis=0) - s) / (stack.std(axis=0, ddof=1) / np.sqrt(reps))
    elapsed = time.perf_counter() - start
    record(7, "mm unbiasedness", z.max() <= 3 and elapsed < 300, f"max |bias|/SE {z.max():.2f}", elapsed)


@pytest.mark.slow
def test_08_desk_scale_ordering():
    start = time.perf_counter()
    summary = run_experiment(ScenarioSpec(n=400, p=600, T=10, seed=8), CvSpec(), 50)
    m = {k: v.mean_loss for k, v in summary.methods.items()}
    elapsed = time.perf_counter() - start
    ok = (m["oracle"] < m["proposed"] < m["mm"] and m["proposed"] < m["naive"]
          and m["proposed"] / m["oracle"] < m["naive"] / m["oracle"] and elapsed < 1800)
    detail = ", ".join(f"{k} {m[k]:.3f}" for k in ("oracle", "proposed", "naive", "mm"))
    record(8, "desk-scale ordering", ok, detail + f", unconverged {summary.n_unconverged}", elapsed)


REFERENCE_TABLE = {"naive": (2.593, 0.10), "oracle": (0.652, 0.10), "proposed": (1.207, 0.20), "mm": (2.030, 0.30)}


@pytest.mark.full_scale
@pytest.mark.skipif(os.environ.get("MTCOV_FULL_SCALE") != "1", reason="set MTCOV_FULL_SCALE=1 (hours)")
def test_09_full_size_table():
    start = time.perf_counter()
    summary = run_experiment(ScenarioSpec(n=1000, p=1500, T=20, seed=9), CvSpec(), 100)
    m = {k: v.mean_loss for k, v in summary.methods.items()}
    ok = all(abs(m[k] - ref) <= tol * ref for k, (ref, tol) in REFERENCE_TABLE.items())
    detail = ", ".join(f"{k} {m[k]:.3f} (ref {ref})" for k, (ref, _) in REFERENCE_TABLE.items())
    record(9, "full-size table", ok, detail, time.perf_counter() - start)


@pytest.mark.slow
def test_10_gen_error_consistency():
    start = time.perf_counter()
    summary = run_experiment(ScenarioSpec(n=400, p=600, T=5, seed=10), CvSpec(), 20)
    ratios = np.array([r.gen_error / r.gen_error_target for r in summary.records])
    elapsed = time.perf_counter() - start
    ok = 0.9 <= ratios.mean() <= 1.1 and elapsed < 600
    record(10, "gen-error consistency", ok, f"mean ratio {ratios.mean():.4f} (min {ratios.min():.3f}, "
           f"max {ratios.max():.3f})", elapsed)


@pytest.mark.slow
def test_11_root_n_rate():
    start = time.perf_counter()
    table = scaling_study(ScenarioSpec(n=200, p=300, T=5, seed=11), [200, 400, 800], 30, CvSpec())
    elapsed = time.perf_counter() - start
    ok = -0.7 <= table.slope <= -0.3 and elapsed < 1800
    losses = ", ".join(f"n={n}: {l:.4f}" for n, l in zip(table.n_values, table.mean_loss))
    record(11, "root-n rate", ok, f"slope {table.slope:.3f} ({losses})", elapsed)


def test_12_schedule_independence():
    start = time.perf_counter()
    spec = ScenarioSpec(n=60, p=80, T=3, seed=12)
    cv = CvSpec(n_alphas=20, folds=3)
    dumps = []
    for par in (1, 4):
        d = run_experiment(spec, cv, 6, parallelism=par).to_dict()
        d.pop("wall_time")
        dumps.append(dumps_json(d))
    elapsed = time.perf_counter() - start
    record(12, "determinism across parallelism", dumps[0] == dumps[1], f"identical={dumps[0] == dumps[1]}",
           elapsed)
