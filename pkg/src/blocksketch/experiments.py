"""Desk-scale experiment drivers behind the CLI.

Config files are flat ``key = value`` text; ``#`` starts a comment, list
values are comma separated, and ``none`` means unset.  Every output is a
CSV whose rows are sorted before writing, so reruns with the same config
are byte-identical.

The Hadamard kinds need a power-of-two dimension.  When ``n`` is not one,
those methods run on the system zero-padded to the next power of two,
re-partitioned into power-of-two blocks with the same sampled fraction
``q/K``.  Zero rows change neither the gradient nor the least-squares
solution.
"""
import csv
from dataclasses import dataclass, fields, replace
import io
import itertools
import math
from pathlib import Path

import numpy as np

from . import rng
from .errors import DivergenceError
from .linalg import (
    Partition,
    block_scores,
    is_power_of_two,
    least_squares,
    orthonormal_basis,
    spectral_norm,
    write_matrix,
)
from .security import (
    distinguisher_trials,
    ensemble_size,
    secrecy_frequency_test,
    secrecy_threshold,
    signed_permutation_group,
    trivial_group,
)
from .sim import (
    ShiftedExponential,
    StepRule,
    StragglerModel,
    aggregated_gradient,
    baseline_minibatch,
    baseline_sd,
    contraction_factor,
    encode_distribute,
    optimal_step,
    sketched_solution_oracle,
    ssd_run,
)
from .sketch import (
    ProjectionKind,
    SketchConfig,
    build_projection,
    gram_expectation_oracle,
    projection_matrix,
)

DISTS = ("gaussian-sparse", "gaussian-dense", "student-t")
BASELINES = ("sd", "ssd")
ALL_METHODS = ("blocksrht", "garbled", "haar", "gaussian", "rademacher", "sd", "ssd")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 2000
    d: int = 40
    k: int = 100
    r: int = 1000
    dist: str = "student-t"
    dof: float = 3.0
    noise_std: float = 1.0
    density: float = 0.1
    heavy_fraction: float = 0.1
    heavy_scale: float = 10.0
    steps: int = 100
    step_factors: tuple = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0)
    fig2_factor: float = 2.0
    repeats: int = 6
    seed: int = 0
    straggler_shift: float = None
    straggler_rate: float = 1.0
    methods: tuple = ALL_METHODS
    fig3_kinds: tuple = ("identity", "blocksrht", "garbled", "haar", "rademacher", "gaussian")
    out: str = "out"

    def __post_init__(self):
        try:
            SketchConfig(self.n, self.d, self.k, self.r)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.dist not in DISTS:
            raise ConfigError(f"unknown dist {self.dist!r}; choose from {DISTS}")
        if self.repeats < 1 or self.steps < 0 or self.seed < 0:
            raise ConfigError("repeats >= 1, steps >= 0 and seed >= 0 required")
        for m in self.methods:
            if m not in BASELINES:
                _kind(m)
        for m in self.fig3_kinds:
            _kind(m)

    @property
    def tau(self):
        return self.n // self.k

    @property
    def q(self):
        return self.r // self.tau

    @property
    def shift(self):
        return self.tau / self.n if self.straggler_shift is None else self.straggler_shift


def _kind(name):
    try:
        return ProjectionKind(name)
    except ValueError:
        raise ConfigError(f"unknown projection kind {name!r}") from None


def _convert(f, raw):
    raw = raw.strip()
    if f.name in ("straggler_shift",):
        return None if raw.lower() == "none" else float(raw)
    if isinstance(f.default, tuple):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        return tuple(float(s) for s in items) if f.name == "step_factors" else tuple(items)
    if isinstance(f.default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(f.default, int):
        return int(raw)
    if isinstance(f.default, float):
        return float(raw)
    return raw


def parse_config(text):
    fmap = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in fmap:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(fmap[key], raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
    return ExperimentConfig(**values)


def emit_config(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            s = "none"
        elif isinstance(v, tuple):
            s = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        lines.append(f"{f.name} = {s}")
    return "\n".join(lines) + "\n"


def load_config(path):
    return parse_config(Path(path).read_text())


# -- data -------------------------------------------------------------------


def gen_data(cfg, seed=None, out=None):
    """Draw ``(A, b, x_star)`` for one repeat; optionally write CSV matrix files.

    Gaussian laws scale a random ``heavy_fraction`` of blocks by
    ``heavy_scale`` so the block-leverage scores are far from uniform; the
    Student-t law gets its non-uniformity from heavy tails.
    """
    seed = cfg.seed if seed is None else seed
    gen = rng.stream(seed, "data")
    shape = (cfg.n, cfg.d)
    if cfg.dist == "student-t":
        A = gen.standard_t(cfg.dof, shape)
    else:
        A = gen.standard_normal(shape)
        if cfg.dist == "gaussian-sparse":
            A *= gen.random(shape) < cfg.density
        heavy = max(1, round(cfg.heavy_fraction * cfg.k))
        part = Partition(cfg.n, cfg.k)
        for j in sorted(gen.choice(cfg.k, heavy, replace=False)):
            A[part.block(int(j))] *= cfg.heavy_scale
    w = gen.standard_normal(cfg.d)
    b = A @ w + cfg.noise_std * gen.standard_normal(cfg.n)
    x_star = least_squares(A, b)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_matrix(out / "A.csv", A)
        write_matrix(out / "b.csv", b)
        write_matrix(out / "x_star.csv", x_star)
    return A, b, x_star


@dataclass(frozen=True)
class Layout:
    n: int
    k: int
    q: int

    @property
    def tau(self):
        return self.n // self.k

    @property
    def r(self):
        return self.q * self.tau


def method_layout(cfg, kind):
    kind = ProjectionKind(kind)
    if not kind.hadamard or (is_power_of_two(cfg.n) and cfg.n % cfg.k == 0):
        return Layout(cfg.n, cfg.k, cfg.q)
    n2 = 1 << (cfg.n - 1).bit_length()
    tau2 = 1 << (cfg.tau.bit_length() - 1)
    k2 = n2 // tau2
    q2 = max(1, min(k2, round(k2 * cfg.q / cfg.k)))
    return Layout(n2, k2, q2)


def _pad(M, n):
    extra = n - M.shape[0]
    if extra == 0:
        return M
    return np.concatenate([M, np.zeros((extra,) + M.shape[1:])])


def run_method(cfg, method, A, b, x_star, xi, seed, steps=None):
    """One solver run; ``xi`` is on the per-sample mean-loss scale."""
    steps = cfg.steps if steps is None else steps
    x0 = np.zeros(cfg.d)
    if method == "sd":
        return baseline_sd(A, b, x0, xi, steps, x_star=x_star, normalizer=cfg.n)
    if method == "ssd":
        return baseline_minibatch(A, b, Partition(cfg.n, cfg.k), cfg.q, x0, xi, steps,
                                  rng.derive_seed(seed, "minibatch"), x_star=x_star, normalizer=cfg.n)
    kind = ProjectionKind(method)
    lay = method_layout(cfg, kind)
    P = build_projection(kind, lay.n, rng.derive_seed(seed, "projection"))
    shards = encode_distribute(_pad(A, lay.n), _pad(b, lay.n), P, Partition(lay.n, lay.k), lay.r)
    model = StragglerModel(lay.k, lay.q, ShiftedExponential(cfg.shift, cfg.straggler_rate))
    rule = StepRule(xi, rescale=True, normalizer=cfg.n)
    return ssd_run(shards, model, x0, steps, rule, rng.derive_seed(seed, "rounds"), x_star=x_star)


def _repeat_data(cfg, rep):
    A, b, x_star = gen_data(cfg, rng.derive_seed(cfg.seed, "data", rep))
    return A, b, x_star, optimal_step(A)


def run_fig1(cfg):
    """Mean final residual ``||x* - x_hat||`` (log10) per step factor and method.

    Returns ``(rows, diverged)`` where rows are ``(method, factor, value)``
    and divergent cells hold ``inf``.
    """
    sums = {(m, f): 0.0 for m in cfg.methods for f in cfg.step_factors}
    for rep in range(cfg.repeats):
        A, b, x_star, xi_opt = _repeat_data(cfg, rep)
        for (mi, m), (fi, f) in itertools.product(enumerate(cfg.methods), enumerate(cfg.step_factors)):
            if math.isinf(sums[m, f]):
                continue
            seed = rng.derive_seed(cfg.seed, "run", rep, mi)
            try:
                state = run_method(cfg, m, A, b, x_star, 10.0 ** f * xi_opt, seed)
                sums[m, f] += state.history[-1].residual if state.history else state.initial_residual
            except DivergenceError:
                sums[m, f] = math.inf
    rows = []
    for (m, f), total in sums.items():
        mean = total / cfg.repeats
        rows.append((m, f, math.inf if math.isinf(mean) else math.log10(mean)))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows, any(math.isinf(r[2]) for r in rows)


def run_fig2(cfg, keep_histories=False):
    """Mean residual at every iteration, per method, at ``10**fig2_factor * xi_opt``.

    Returns ``(curves, diverged, histories)``; ``curves[m]`` has ``steps + 1``
    entries starting at the initial residual.  ``histories`` holds the first
    repeat's solver state per method when requested.
    """
    curves = {m: np.zeros(cfg.steps + 1) for m in cfg.methods}
    histories = {}
    diverged = False
    for rep in range(cfg.repeats):
        A, b, x_star, xi_opt = _repeat_data(cfg, rep)
        xi = 10.0 ** cfg.fig2_factor * xi_opt
        for mi, m in enumerate(cfg.methods):
            seed = rng.derive_seed(cfg.seed, "run", rep, mi)
            try:
                state = run_method(cfg, m, A, b, x_star, xi, seed)
                res = state.residuals()
            except DivergenceError as exc:
                diverged = True
                state = exc.state
                res = np.full(cfg.steps + 1, math.inf)
                res[: state.t] = state.residuals()[: state.t]
            curves[m] += res
            if keep_histories and rep == 0:
                histories[m] = state
    return {m: c / cfg.repeats for m, c in curves.items()}, diverged, histories


def run_fig3(cfg):
    """Block scores of the data basis before and after each projection kind.

    Returns rows ``(kind, block, score)``; ``identity`` is the raw basis.
    Non-orthonormal kinds report the block norms of ``Pi U`` directly.
    """
    A, _, _ = gen_data(cfg, rng.derive_seed(cfg.seed, "data", 0))
    U = orthonormal_basis(A)
    rows = []
    for ki, name in enumerate(cfg.fig3_kinds):
        kind = ProjectionKind(name)
        lay = method_layout(cfg, kind)
        P = build_projection(kind, lay.n, rng.derive_seed(cfg.seed, "fig3", ki))
        scores = block_scores(P.apply(_pad(U, lay.n)), Partition(lay.n, lay.k))
        rows.extend((name, j, float(s)) for j, s in enumerate(scores))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


# -- suites -----------------------------------------------------------------


def _row(test, param, value, threshold, ok):
    return (test, param, value, threshold, bool(ok))


def oracle_suite(seed=0):
    """Exhaustive and direct-solve checks of the sketching identities.

    Rows are ``(test, param, value, threshold, pass)``.
    """
    rows = []
    for kind, n, k, q in (("haar", 12, 6, 3), ("garbled", 16, 8, 4)):
        P = build_projection(kind, n, rng.derive_seed(seed, "oracle-gram", n))
        dev = float(np.max(np.abs(gram_expectation_oracle(P, Partition(n, k), q) - np.eye(n))))
        rows.append(_row("gram_expectation", f"{kind}:N={n}:K={k}:q={q}", dev, 1e-10, dev < 1e-10))

    n, k, q, d = 12, 6, 3, 4
    gen = rng.stream(seed, "oracle-grad")
    A, b, x = gen.standard_normal((n, d)), gen.standard_normal(n), gen.standard_normal(d)
    P = build_projection("haar", n, rng.derive_seed(seed, "oracle-grad-proj"))
    shards = encode_distribute(A, b, P, Partition(n, k), n)
    g_ls = 2.0 * A.T @ (A @ x - b)
    subsets = list(itertools.combinations(range(k), q))
    mean_g = sum(aggregated_gradient(shards, S, x) for S in subsets) / len(subsets)
    dev = float(np.max(np.abs(mean_g - q / k * g_ls)))
    rows.append(_row("mean_gradient", f"K={k}:q={q}:d={d}", dev, 1e-10, dev < 1e-10))
    xi = 1e-2
    eta = StepRule(xi, rescale=True).eta(k, q)
    mean_step = sum(x - eta * aggregated_gradient(shards, S, x) for S in subsets) / len(subsets)
    dev = float(np.max(np.abs(mean_step - (x - xi * g_ls))))
    rows.append(_row("mean_rescaled_step", f"K={k}:q={q}:d={d}", dev, 1e-10, dev < 1e-10))

    worst = 0.0
    for s in range(10):
        gen = rng.stream(seed, "oracle-lstsq", s)
        A, b = gen.standard_normal((512, 16)), gen.standard_normal(512)
        x_hat = sketched_solution_oracle(A, b, build_projection("haar", 512, rng.derive_seed(seed, "l2", s)))
        x_ls = np.linalg.lstsq(A, b, rcond=None)[0]
        worst = max(worst, float(np.linalg.norm(x_hat - x_ls) / np.linalg.norm(x_ls)))
    rows.append(_row("sketched_solution", "haar:N=512:d=16:seeds=10", worst, 1e-8, worst < 1e-8))

    n, k, d = 64, 8, 5
    gen = rng.stream(seed, "oracle-exact")
    A, b = gen.standard_normal((n, d)), gen.standard_normal(n)
    for kind in ("identity", "haar", "blocksrht", "garbled"):
        shards = encode_distribute(A, b, build_projection(kind, n, rng.derive_seed(seed, "exact", kind)),
                                   Partition(n, k), n)
        dev = 0.0
        for _ in range(20):
            x = gen.standard_normal(d)
            g = 2.0 * A.T @ (A @ x - b)
            dev = max(dev, float(np.max(np.abs(aggregated_gradient(shards, range(k), x) - g))))
        rows.append(_row("exact_gradient", f"{kind}:N={n}:K={k}", dev, 1e-10, dev < 1e-10))

    rows.extend(contraction_check(seed))
    return sorted(rows, key=lambda r: (r[0], r[1]))


def contraction_check(seed=0, n=256, d=8, k=32, q=16, steps=50):
    """Per-step error contraction and its sketch-distortion bound on a consistent system."""
    gen = rng.stream(seed, "oracle-contraction")
    A = gen.standard_normal((n, d))
    b = A @ gen.standard_normal(d)
    x_star = least_squares(A, b)
    part = Partition(n, k)
    P = build_projection("haar", n, rng.derive_seed(seed, "contraction-proj"))
    r = q * part.tau
    shards = encode_distribute(A, b, P, part, r)
    rule = StepRule(0.25 * optimal_step(A))
    model = StragglerModel(k, q, ShiftedExponential(part.tau / n))
    state = ssd_run(shards, model, np.zeros(d), steps, rule, rng.derive_seed(seed, "contraction-run"),
                    x_star=x_star, track_contraction=True)
    eta = rule.eta(k, q)
    sigma2 = spectral_norm(A) ** 2
    gamma_sd = contraction_factor(A, np.eye(n), eta)
    Pi = projection_matrix(P)
    res = state.residuals()
    step_gap = bound_gap = -math.inf
    for t, rec in enumerate(state.history):
        S = shards.scale * np.concatenate([Pi[part.block(j)] for j in rec.responders])
        gamma = contraction_factor(A, S, eta)
        step_gap = max(step_gap, res[t + 1] - gamma * res[t])
        bound = gamma_sd + 2 * eta * sigma2 * spectral_norm(np.eye(n) - S.T @ S)
        bound_gap = max(bound_gap, gamma - bound)
    return [
        _row("contraction_step", f"N={n}:d={d}:steps={steps}", step_gap, 1e-9, step_gap <= 1e-9),
        _row("contraction_bound", f"N={n}:d={d}:steps={steps}", bound_gap, 1e-9, bound_gap <= 1e-9),
    ]


def secrecy_suite(seed=0):
    rows = []
    trials = distinguisher_trials()
    correct = sum(truth == guess for _, truth, guess in trials)
    rows.append(_row("srht_distinguisher", "N=2:exhaustive", correct, len(trials), correct == len(trials)))

    G = signed_permutation_group(2)
    tv = secrecy_frequency_test(G, 0, seed, exact=True)
    rows.append(_row("secrecy_exact", f"signed_perm:N=2:order={G.order}", tv, 0.0, tv == 0.0))
    n_trials = 1000 * G.order
    tv = secrecy_frequency_test(G, n_trials, seed)
    thr = secrecy_threshold(G.order, n_trials)
    rows.append(_row("secrecy_sampled", f"signed_perm:N=2:trials={n_trials}", tv, thr, tv <= thr))
    tv = secrecy_frequency_test(trivial_group(2), 100, seed)
    rows.append(_row("secrecy_sampled", "trivial:N=2:trials=100", tv, 0.0, tv == 0.0))

    for kind, n, expected in (("blocksrht", 8, 2 ** 8), ("garbled", 8, 2 ** 8 * math.factorial(8)),
                              ("rademacher", 2, 16)):
        size = ensemble_size(kind, n)
        rows.append(_row("ensemble_size", f"{kind}:N={n}", size, expected, size == expected))

    gen = rng.stream(seed, "leakage")
    n, d = 64, 6
    A = gen.standard_normal((n, d))
    for kind in ("haar", "blocksrht", "garbled"):
        P = build_projection(kind, n, rng.derive_seed(seed, "leak", kind))
        C = P.apply(A)
        dev = float(np.max(np.abs(P.apply_transpose(C) - A)))
        rows.append(_row("decrypt_roundtrip", kind, dev, 1e-10, dev < 1e-10))
        sv = np.linalg.svd(C, compute_uv=False)
        dev = float(np.max(np.abs(sv - np.linalg.svd(A, compute_uv=False))))
        rows.append(_row("singular_value_leak", kind, dev, 1e-8, dev < 1e-8))
        U0, U1 = orthonormal_basis(A[:, :3]), orthonormal_basis(A[:, 3:])
        dev = float(np.max(np.abs(P.apply(U0).T @ P.apply(U1) - U0.T @ U1)))
        rows.append(_row("key_reuse_leak", kind, dev, 1e-10, dev < 1e-10))
    return sorted(rows, key=lambda r: (r[0], r[1]))


# -- output -----------------------------------------------------------------


def _cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def fig2_rows(curves, methods):
    return [[t] + [curves[m][t] for m in methods] for t in range(len(next(iter(curves.values()))))]


def with_overrides(cfg, seed=None, out=None):
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if out is not None:
        changes["out"] = str(out)
    return replace(cfg, **changes) if changes else cfg
