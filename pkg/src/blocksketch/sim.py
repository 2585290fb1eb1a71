"""Simulated coded-computing network running iterative-sketching steepest descent.

The server encodes ``[A | b]`` once with ``G = sqrt(N/r) * Pi`` and hands
block ``i`` of the encoded system to worker ``i`` (one replica per block,
so ``m = K``).  Each round every worker draws a runtime, the server keeps
the ``q`` fastest and sums their partial gradients.  Summing the
responders' gradients *is* the gradient of the sketched objective for that
round's block-sampling sketch, so no decoding step is needed.

Step sizes: the update is ``x <- x - eta * g_hat`` with
``eta = xi * factor / normalizer``.  ``factor`` is ``K/q`` under the
rescaled rule and 1 otherwise; ``normalizer`` lets callers express ``xi``
against the per-sample mean loss (pass ``normalizer=N``).
"""
from dataclasses import dataclass, field
import io
import math

import numpy as np

from . import rng
from .errors import DimensionError, DivergenceError, PreconditionError, RankError
from .linalg import Partition, least_squares, spectral_norm
from .sketch import apply_projection

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class ShiftedExponential:
    shift: float
    rate: float = 1.0

    def __post_init__(self):
        if self.shift < 0 or self.rate <= 0:
            raise ValueError("need shift >= 0 and rate > 0")

    def draw(self, gen, m):
        return self.shift + gen.exponential(1.0 / self.rate, m)


@dataclass(frozen=True)
class Deterministic:
    times: tuple

    def draw(self, gen, m):
        if len(self.times) != m:
            raise DimensionError(f"{len(self.times)} runtimes for {m} workers")
        return np.asarray(self.times, dtype=np.float64)


@dataclass(frozen=True)
class StragglerModel:
    m: int
    q: int
    law: object

    def __post_init__(self):
        if not 1 <= self.q <= self.m:
            raise ValueError(f"need 1 <= q <= m, got q={self.q}, m={self.m}")

    @property
    def stragglers(self):
        return self.m - self.q


def simulate_round(model, seed, t):
    """Indices of the ``q`` fastest workers in round ``t``, sorted ascending.

    Runtimes are fresh per ``(seed, t)``; equal runtimes go to the lower index.
    """
    times = model.law.draw(rng.stream(seed, "runtime", t), model.m)
    order = np.argsort(times, kind="stable")
    return tuple(sorted(int(i) for i in order[: model.q]))


@dataclass(frozen=True, eq=False)
class EncodedShards:
    A: np.ndarray  # (K, tau, d)
    b: np.ndarray  # (K, tau)
    projection: object
    partition: Partition
    scale: float

    @property
    def k(self):
        return self.partition.k

    def stacked(self):
        return self.A.reshape(self.partition.n, -1), self.b.reshape(-1)


def encode_distribute(A, b, P, part, r):
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if A.shape[0] != part.n or b.shape[0] != part.n or P.n != part.n:
        raise DimensionError("data, projection and partition sizes disagree")
    if r < 1 or r > part.n:
        raise DimensionError(f"sketch size r={r} out of range")
    scale = math.sqrt(part.n / r)
    Ab = scale * apply_projection(P, np.column_stack([A, b]))
    d = A.shape[1]
    return EncodedShards(
        A=Ab[:, :d].reshape(part.k, part.tau, d).copy(),
        b=Ab[:, d].reshape(part.k, part.tau).copy(),
        projection=P,
        partition=part,
        scale=scale,
    )


def aggregated_gradient(shards, S, x):
    """``2 * sum_j A_j^T (A_j x - b_j)`` over responders ``S``, with multiplicity."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros(shards.A.shape[2])
    for j in sorted(S):
        if not 0 <= j < shards.k:
            raise IndexError(f"worker {j} out of range")
        g += shards.A[j].T @ (shards.A[j] @ x - shards.b[j])
    return 2.0 * g


def round_sketch_gram(shards, S):
    """``(S A)^T (S A)`` for the round's induced sketch, read off the shards."""
    d = shards.A.shape[2]
    gram = np.zeros((d, d))
    for j in sorted(S):
        gram += shards.A[j].T @ shards.A[j]
    return gram


@dataclass(frozen=True)
class StepRule:
    xi: float
    rescale: bool = False
    normalizer: float = 1.0

    def __post_init__(self):
        if self.xi <= 0 or self.normalizer <= 0:
            raise ValueError("step size and normalizer must be positive")

    def eta(self, k, q):
        factor = k / q if self.rescale else 1.0
        return self.xi * factor / self.normalizer


@dataclass(frozen=True)
class IterationRecord:
    t: int
    responders: tuple
    gradient_norm: float
    residual: float
    objective: float
    contraction: float = None


@dataclass
class SolverState:
    x: np.ndarray
    x_star: np.ndarray
    step_rule: StepRule
    initial_residual: float
    history: list = field(default_factory=list)

    @property
    def t(self):
        return len(self.history)

    def residuals(self):
        return np.array([self.initial_residual] + [h.residual for h in self.history])


def _guard(state, residual):
    if not math.isfinite(residual) or residual > DIVERGENCE_LIMIT:
        raise DivergenceError(f"residual {residual:.3g} exceeded limit at step {state.t}", state)


def ssd_run(shards, model, x0, steps, step_rule, seed, x_star=None, track_contraction=False):
    """Iterative-sketching stochastic steepest descent over the simulated network.

    Residuals are measured against ``x_star`` (a direct solve of the encoded
    system when omitted).  With ``track_contraction`` every record carries
    ``lambda_1(I - 2 eta (S A)^T (S A))`` for the round's sketch.
    """
    if model.m != shards.k:
        raise DimensionError(f"{model.m} workers for {shards.k} shards")
    A_enc, b_enc = shards.stacked()
    if x_star is None:
        x_star = least_squares(A_enc, b_enc)
    x = np.array(x0, dtype=np.float64).reshape(-1)
    eta = step_rule.eta(shards.k, model.q)
    state = SolverState(x.copy(), np.asarray(x_star, dtype=np.float64), step_rule,
                        float(np.linalg.norm(x - x_star)))
    d = x.shape[0]
    for t in range(steps):
        S = simulate_round(model, seed, t)
        g = aggregated_gradient(shards, S, x)
        gamma = None
        if track_contraction:
            gamma = spectral_norm(np.eye(d) - 2.0 * eta * round_sketch_gram(shards, S))
        x = x - eta * g
        residual = float(np.linalg.norm(x - x_star))
        objective = float(np.sum((A_enc @ x - b_enc) ** 2)) / shards.scale ** 2
        state.x = x
        state.history.append(IterationRecord(t, S, float(np.linalg.norm(g)), residual, objective, gamma))
        _guard(state, residual)
    return state


def contraction_factor(A, S, xi):
    """``lambda_1(I_d - 2 xi (S A)^T (S A))`` for an explicit sketch ``S``."""
    SA = np.asarray(S, dtype=np.float64) @ np.asarray(A, dtype=np.float64)
    return spectral_norm(np.eye(SA.shape[1]) - 2.0 * xi * SA.T @ SA)


def optimal_step(A):
    """``2 / sigma_max(A)^2``."""
    return 2.0 / spectral_norm(A) ** 2


def _plain_run(A, b, x0, xi, steps, x_star, normalizer, gradient):
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if x_star is None:
        x_star = least_squares(A, b)
    x = np.array(x0, dtype=np.float64).reshape(-1)
    rule = StepRule(xi, normalizer=normalizer)
    eta = rule.eta(1, 1)
    state = SolverState(x.copy(), np.asarray(x_star), rule, float(np.linalg.norm(x - x_star)))
    for t in range(steps):
        S, g = gradient(t, x)
        x = x - eta * g
        residual = float(np.linalg.norm(x - x_star))
        state.x = x
        state.history.append(IterationRecord(
            t, S, float(np.linalg.norm(g)), residual, float(np.sum((A @ x - b) ** 2))))
        _guard(state, residual)
    return state


def baseline_sd(A, b, x0, xi, steps, x_star=None, normalizer=1.0):
    """Uncoded steepest descent on ``||Ax - b||^2``."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    return _plain_run(A, b, x0, xi, steps, x_star, normalizer,
                      lambda t, x: ((), 2.0 * A.T @ (A @ x - b)))


def minibatch_gradient(A, b, part, blocks, x):
    """``(K / |blocks|) * 2 * sum`` of raw block gradients over ``blocks``."""
    g = np.zeros(A.shape[1])
    for j in sorted(blocks):
        sl = part.block(j)
        g += A[sl].T @ (A[sl] @ x - b[sl])
    return 2.0 * part.k / len(blocks) * g


def baseline_minibatch(A, b, part, batch_blocks, x0, xi, steps, seed, x_star=None, normalizer=1.0):
    """Mini-batch stochastic steepest descent on the raw (unprojected) partition.

    Each step draws ``batch_blocks`` distinct blocks uniformly.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if not 1 <= batch_blocks <= part.k:
        raise ValueError("batch_blocks must lie in [1, K]")

    def gradient(t, x):
        picked = rng.stream(seed, "minibatch", t).choice(part.k, batch_blocks, replace=False)
        S = tuple(sorted(int(j) for j in picked))
        return S, minibatch_gradient(A, b, part, S, x)

    return _plain_run(A, b, x0, xi, steps, x_star, normalizer, gradient)


def sketched_solution_oracle(A, b, P):
    """Solve ``min ||G (Ax - b)||^2`` with the full projection via the normal equations."""
    if not P.kind.orthonormal:
        raise PreconditionError(f"{P.kind.value} projection is not orthonormal")
    GA = apply_projection(P, A)
    Gb = apply_projection(P, np.asarray(b, dtype=np.float64).reshape(-1))
    gram = GA.T @ GA
    ev = np.linalg.eigvalsh(gram)
    if ev[0] <= (1e-10 ** 2) * ev[-1]:
        raise RankError("matrix is rank deficient")
    return np.linalg.solve(gram, GA.T @ Gb)


def history_csv(state):
    """Per-iteration CSV: ``t,responders,residual,objective,gradient_norm``."""
    buf = io.StringIO()
    buf.write("t,responders,residual,objective,gradient_norm\n")
    for rec in state.history:
        buf.write(f"{rec.t},{';'.join(str(j) for j in rec.responders)},"
                  f"{rec.residual!r},{rec.objective!r},{rec.gradient_norm!r}\n")
    return buf.getvalue()
