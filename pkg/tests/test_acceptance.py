"""Acceptance criteria, one test per criterion, at the stated tolerances.

Each test tags itself with its criterion number; ``conftest.py`` prints a
PASS/FAIL line per criterion at the end of the run.
"""
import itertools
import math
import time

import numpy as np
import pytest
from scipy.optimize import nnls

from blocksketch import experiments as ex
from blocksketch import rng
from blocksketch.cli import main
from blocksketch.linalg import Partition, embedding_distortion, fwht, fwht_inplace, orthonormal_basis
from blocksketch.security import (
    distinguisher_trials,
    secrecy_frequency_test,
    secrecy_threshold,
    signed_permutation_group,
)
from blocksketch.sim import (
    ShiftedExponential,
    StepRule,
    StragglerModel,
    aggregated_gradient,
    encode_distribute,
    sketched_solution_oracle,
    ssd_run,
)
from blocksketch.sketch import (
    BlockSample,
    SketchOperator,
    build_projection,
    gram_expectation_oracle,
    projection_matrix,
)

from conftest import hadamard_oracle

ORTHONORMAL = ("identity", "haar", "blocksrht", "garbled")


@pytest.fixture
def criterion(record_property):
    def tag(number):
        record_property("criterion", number)

    return tag


def _fwht_seconds(n, cols=16):
    x = rng.stream(0, "timing", n).standard_normal((n, cols))
    loops = max(1, 2 ** 23 // (n * cols))
    best = math.inf
    for _ in range(5):
        batch = [x.copy() for _ in range(loops)]
        t0 = time.perf_counter()
        for y in batch:
            fwht_inplace(y)
        best = min(best, (time.perf_counter() - t0) / loops)
    return best


def test_c01_fwht_oracle_and_scaling(criterion):
    criterion(1)
    for e in range(1, 7):
        n = 2 ** e
        H = hadamard_oracle(n)
        for seed in range(50):
            v = rng.stream(seed, "c01").standard_normal(n)
            assert np.max(np.abs(fwht(v) - H @ v)) < 1e-12

    sizes = [2 ** e for e in range(10, 17)]
    times = np.array([_fwht_seconds(n) for n in sizes])
    X = np.column_stack([np.ones(len(sizes)), [n * math.log2(n) for n in sizes]])
    # relative least squares with a non-negative call overhead
    coef, _ = nnls(X / times[:, None], np.ones(len(sizes)))
    ratio = times / (X @ coef)
    assert coef[1] > 0
    assert np.all(ratio <= 1.5), ratio


@pytest.mark.parametrize("kind,n,k,q", [("haar", 12, 6, 3), ("garbled", 16, 8, 4)])
def test_c02_gram_expectation_exhaustive(criterion, kind, n, k, q):
    criterion(2)
    mean = gram_expectation_oracle(build_projection(kind, n, 1), Partition(n, k), q)
    assert np.max(np.abs(mean - np.eye(n))) < 1e-10


def test_c03_unbiased_gradient_and_rescaled_step(criterion):
    criterion(3)
    n, k, q, d = 12, 6, 3, 4
    g = rng.stream(0, "c03")
    A, b, x = g.standard_normal((n, d)), g.standard_normal(n), g.standard_normal(d)
    shards = encode_distribute(A, b, build_projection("haar", n, 2), Partition(n, k), n)
    g_ls = 2 * A.T @ (A @ x - b)
    subsets = list(itertools.combinations(range(k), q))
    mean_g = np.mean([aggregated_gradient(shards, S, x) for S in subsets], axis=0)
    assert np.max(np.abs(mean_g - q / k * g_ls)) < 1e-10

    xi = 0.01
    eta = StepRule(xi, rescale=True).eta(k, q)
    mean_step = np.mean([x - eta * aggregated_gradient(shards, S, x) for S in subsets], axis=0)
    assert np.max(np.abs(mean_step - (x - xi * g_ls))) < 1e-10


def test_c04_sketched_solution_is_least_squares(criterion):
    criterion(4)
    for seed in range(10):
        g = rng.stream(seed, "c04")
        A, b = g.standard_normal((512, 16)), g.standard_normal(512)
        x_hat = sketched_solution_oracle(A, b, build_projection("haar", 512, seed))
        x_ls = np.linalg.pinv(A) @ b
        assert np.linalg.norm(x_hat - x_ls) / np.linalg.norm(x_ls) < 1e-8


@pytest.mark.parametrize("kind", ORTHONORMAL)
def test_c05_exact_gradient_mode(criterion, kind):
    criterion(5)
    n, k, d = 128, 16, 6
    g = rng.stream(0, "c05", kind)
    A, b = g.standard_normal((n, d)), g.standard_normal(n)
    shards = encode_distribute(A, b, build_projection(kind, n, 3), Partition(n, k), n)
    for _ in range(20):
        x = g.standard_normal(d)
        assert np.max(np.abs(aggregated_gradient(shards, range(k), x) - 2 * A.T @ (A @ x - b))) < 1e-10


def test_c06_error_contraction(criterion):
    criterion(6)
    n, d, k, q, steps = 256, 8, 32, 16, 50
    g = rng.stream(0, "c06")
    A = g.standard_normal((n, d))
    b = A @ g.standard_normal(d)
    x_star = np.linalg.lstsq(A, b, rcond=None)[0]
    part = Partition(n, k)
    P = build_projection("haar", n, 4)
    shards = encode_distribute(A, b, P, part, q * part.tau)
    sigma2 = np.linalg.norm(A, 2) ** 2
    xi = 0.5 / sigma2
    state = ssd_run(shards, StragglerModel(k, q, ShiftedExponential(part.tau / n)), np.zeros(d), steps,
                    StepRule(xi), 5, x_star=x_star)
    gamma_sd = np.linalg.norm(np.eye(d) - 2 * xi * A.T @ A, 2)
    Pi = projection_matrix(P)
    res = state.residuals()
    for t, rec in enumerate(state.history):
        S = shards.scale * np.concatenate([Pi[part.block(j)] for j in rec.responders])
        SA = S @ A
        gamma = np.linalg.norm(np.eye(d) - 2 * xi * SA.T @ SA, 2)
        assert res[t + 1] <= gamma * res[t] + 1e-9
        assert gamma <= gamma_sd + 2 * xi * sigma2 * np.linalg.norm(np.eye(n) - S.T @ S, 2) + 1e-9


def _nonuniform_basis(n, d, tau):
    A = rng.stream(0, "c07-data").standard_normal((n, d))
    A[: 10 * tau] *= 10.0
    return orthonormal_basis(A)


@pytest.mark.parametrize("kind", ["haar", "blocksrht", "garbled"])
def test_c07_subspace_embedding(criterion, kind):
    criterion(7)
    n, d, tau, q = 1024, 16, 16, 32
    part = Partition(n, n // tau)
    U = _nonuniform_basis(n, d, tau)
    hits = 0
    for seed in range(50):
        P = build_projection(kind, n, seed)
        draws = rng.stream(seed, "c07-sample").integers(0, part.k, q)
        op = SketchOperator(P, BlockSample(tuple(int(j) for j in draws), part.k), part)
        hits += embedding_distortion(U, op) < 0.5
    assert hits >= 45


@pytest.mark.parametrize("kind", ["blocksrht", "garbled", "rademacher"])
def test_c08_flattening(criterion, kind):
    criterion(8)
    n, d, tau, delta = 2048, 32, 16, 0.05
    part = Partition(n, n // tau)
    log_term = math.log(n * d / delta)
    c2 = 2 + math.log(16) / log_term
    bound = c2 * d * log_term * tau / n
    U = np.eye(n)[:, :d]
    ok = 0
    for seed in range(200):
        V = build_projection(kind, n, seed).apply(U)
        ok += np.max(np.einsum("ij,ij->i", V, V).reshape(part.k, tau).sum(axis=1)) <= bound
    assert ok >= 190


def test_c09_distinguisher(criterion):
    criterion(9)
    trials = distinguisher_trials()
    assert len(trials) == 8
    assert sum(truth == guess for _, truth, guess in trials) == 8


def test_c10_perfect_secrecy(criterion):
    criterion(10)
    G = signed_permutation_group(2)
    assert secrecy_frequency_test(G, 0, 0, exact=True) == 0.0
    trials = 1000 * G.order
    assert secrecy_frequency_test(G, trials, 0) <= secrecy_threshold(G.order, trials)


def test_c11_fig2_ordering(criterion):
    criterion(11)
    cfg = ex.ExperimentConfig(methods=("blocksrht", "garbled", "haar", "sd"), fig2_factor=2.0, repeats=6)
    assert (cfg.n, cfg.d, cfg.k, cfg.q, cfg.r, cfg.steps) == (2000, 40, 100, 50, 1000, 100)
    curves, diverged, _ = ex.run_fig2(cfg)
    assert not diverged
    sd = curves["sd"]
    for m in ("blocksrht", "garbled", "haar"):
        assert curves[m][-1] < sd[-1]
        assert np.mean(curves[m][1:] < sd[1:]) >= 0.8


def test_c12_determinism(criterion, tmp_path):
    criterion(12)
    cfg_path = tmp_path / "cfg.txt"
    cfg_path.write_text(ex.emit_config(ex.ExperimentConfig(
        n=512, d=16, k=32, r=256, steps=30, repeats=2, dist="gaussian-dense")))
    commands = ("gen-data", "fig1", "fig2", "fig3", "oracle-suite", "secrecy-suite")
    for run in ("a", "b"):
        for cmd in commands:
            main([cmd, "--config", str(cfg_path), "--seed", "7", "--out", str(tmp_path / run), "--no-plot"])
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert {"fig1.csv", "fig2.csv", "fig3.csv", "oracle_suite.csv", "secrecy_suite.csv", "A.csv"} <= set(names)
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
