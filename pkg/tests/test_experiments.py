import math

import numpy as np
import pytest

from blocksketch import experiments as ex
from blocksketch.linalg import Partition, leverage_profile, orthonormal_basis
from blocksketch.sketch import build_projection

SMALL = dict(n=64, d=4, k=8, r=32, steps=20, repeats=2)


def small(**kw):
    return ex.ExperimentConfig(**{**SMALL, **kw})


def test_default_config_matches_reference_setup():
    cfg = ex.ExperimentConfig()
    assert (cfg.n, cfg.d, cfg.k, cfg.r, cfg.tau, cfg.q) == (2000, 40, 100, 1000, 20, 50)
    assert cfg.shift == pytest.approx(0.01)


def test_config_round_trip():
    cfg = small(dist="gaussian-sparse", straggler_shift=0.5, step_factors=(-1.0, 0.5), methods=("sd", "haar"))
    assert ex.parse_config(ex.emit_config(cfg)) == cfg
    assert ex.parse_config(ex.emit_config(ex.ExperimentConfig())) == ex.ExperimentConfig()


def test_config_parsing_details():
    cfg = ex.parse_config("# comment\nn = 64\nd=4 # trailing\nk = 8\nr = 32\nstraggler-shift = none\n")
    assert (cfg.n, cfg.d, cfg.straggler_shift) == (64, 4, None)


@pytest.mark.parametrize("text", [
    "n = 64\nk = 7\n",
    "bogus = 1\n",
    "just words\n",
    "dist = cauchy\n",
    "methods = sd, warp\n",
    "n = sixty\n",
    "seed = -1\n",
    "n = 40\nd = 40\nk = 4\nr = 40\n",
])
def test_config_rejects(text):
    with pytest.raises(ex.ConfigError):
        ex.parse_config(text)


def test_load_config(tmp_path):
    (tmp_path / "c.txt").write_text(ex.emit_config(small()))
    assert ex.load_config(tmp_path / "c.txt") == small()


@pytest.mark.parametrize("dist", ex.DISTS)
def test_gen_data_shapes_and_solution(dist):
    A, b, x_star = ex.gen_data(small(dist=dist))
    assert A.shape == (64, 4) and b.shape == (64,) and x_star.shape == (4,)
    assert np.allclose(x_star, np.linalg.lstsq(A, b, rcond=None)[0])


def test_gen_data_noiseless_is_consistent():
    A, b, x_star = ex.gen_data(small(noise_std=0.0))
    assert np.allclose(A @ x_star, b, atol=1e-10)


def test_gen_data_sparse_density():
    A, _, _ = ex.gen_data(ex.ExperimentConfig(dist="gaussian-sparse"))
    assert 0.07 < np.mean(A != 0) < 0.13


def test_gen_data_writes_identical_files(tmp_path):
    ex.gen_data(small(), out=tmp_path / "a")
    ex.gen_data(small(), out=tmp_path / "b")
    for name in ("A.csv", "b.csv", "x_star.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ex.gen_data(small(seed=1), out=tmp_path / "c")
    assert (tmp_path / "a" / "A.csv").read_bytes() != (tmp_path / "c" / "A.csv").read_bytes()


def test_dense_gaussian_blocks_are_nonuniform():
    cfg = ex.ExperimentConfig(dist="gaussian-dense")
    A, _, _ = ex.gen_data(cfg)
    scores = leverage_profile(orthonormal_basis(A), Partition(cfg.n, cfg.k)).block_scores
    assert np.std(scores) / np.mean(scores) > 0.5


def test_method_layout_pads_hadamard_kinds():
    cfg = ex.ExperimentConfig()
    assert ex.method_layout(cfg, "blocksrht") == ex.Layout(2048, 128, 64)
    assert ex.method_layout(cfg, "garbled").r == 1024
    assert ex.method_layout(cfg, "haar") == ex.Layout(2000, 100, 50)
    assert ex.method_layout(small(), "blocksrht") == ex.Layout(64, 8, 4)


def test_padding_keeps_the_solution():
    cfg = ex.ExperimentConfig(n=24, d=3, k=4, r=12, dist="gaussian-dense")
    A, b, x_star = ex.gen_data(cfg)
    lay = ex.method_layout(cfg, "blocksrht")
    assert lay.n == 32
    x_pad = np.linalg.lstsq(ex._pad(A, lay.n), ex._pad(b, lay.n), rcond=None)[0]
    assert np.allclose(x_pad, x_star)


@pytest.mark.parametrize("kind", ["identity", "haar", "blocksrht", "garbled"])
def test_exact_mode_reproduces_sd(kind):
    cfg = small(r=64)
    A, b, x_star = ex.gen_data(cfg)
    xi = 0.5 * ex.optimal_step(A)
    sd = ex.run_method(cfg, "sd", A, b, x_star, xi, 0)
    sk = ex.run_method(cfg, kind, A, b, x_star, xi, 0)
    assert np.max(np.abs(sd.residuals() - sk.residuals())) < 1e-8


def test_fig1_rows_and_order():
    cfg = small(step_factors=(-3.0, 0.0), methods=("sd", "haar", "ssd"))
    rows, diverged = ex.run_fig1(cfg)
    assert not diverged
    assert [(m, f) for m, f, _ in rows] == sorted((m, f) for m in cfg.methods for f in cfg.step_factors)
    sd = {f: v for m, f, v in rows if m == "sd"}
    assert sd[0.0] < sd[-3.0]


def test_fig1_marks_divergence():
    rows, diverged = ex.run_fig1(small(step_factors=(3.0,), methods=("sd",), repeats=1))
    assert diverged
    assert rows == [("sd", 3.0, math.inf)]


def test_fig2_curves_start_at_initial_residual():
    cfg = small(methods=("sd", "blocksrht"), fig2_factor=0.0)
    curves, diverged, histories = ex.run_fig2(cfg, keep_histories=True)
    assert not diverged
    assert set(histories) == {"sd", "blocksrht"}
    for curve in curves.values():
        assert curve.shape == (21,)
    assert curves["sd"][0] == pytest.approx(curves["blocksrht"][0])


def test_fig2_divergent_curve_is_inf_after_blowup():
    cfg = small(methods=("sd",), fig2_factor=3.0, steps=60, repeats=1)
    curves, diverged, _ = ex.run_fig2(cfg)
    assert diverged
    assert math.isinf(curves["sd"][-1])
    assert math.isfinite(curves["sd"][0])


def test_fig3_rows():
    cfg = small(dist="gaussian-dense")
    rows = ex.run_fig3(cfg)
    raw = [s for kind, _, s in rows if kind == "identity"]
    assert len(raw) == 8
    assert sum(raw) == pytest.approx(4.0)
    for kind in ("blocksrht", "garbled", "haar"):
        assert sum(s for k, _, s in rows if k == kind) == pytest.approx(4.0)


def test_fig3_flattens_at_reference_size():
    rows = ex.run_fig3(ex.ExperimentConfig(dist="gaussian-dense"))
    for kind in ("identity", "blocksrht", "garbled", "haar"):
        s = np.array([v for k, _, v in rows if k == kind])
        ratio = s.max() / s.min()
        assert (ratio > 3) if kind == "identity" else (ratio < 1.5)


def test_hadamard_block_scores_ratio_over_seeds():
    n, d, k = 2048, 32, 128
    part = Partition(n, k)
    for kind in ("blocksrht", "garbled"):
        ok = 0
        for seed in range(100):
            U = orthonormal_basis(np.random.default_rng(seed).standard_t(3, (n, d)))
            s = leverage_profile(build_projection(kind, n, seed).apply(U), part).block_scores
            ok += s.max() / s.min() < 4
        assert ok >= 95


def test_suites_pass():
    for rows in (ex.oracle_suite(0), ex.secrecy_suite(0)):
        failed = [r for r in rows if not r[4]]
        assert not failed


def test_csv_text():
    text = ex.csv_text(["a", "b", "c"], [("x", 1, 0.1), ("y", 2, math.inf), ("z", 3, True)])
    assert text == "a,b,c\nx,1,0.1\ny,2,inf\nz,3,true\n"
