"""Random projections, uniform block sampling and sketch assembly.

A sketch of ``A`` is built in two stages: a random ``N x N`` projection
``Pi`` mixes the rows, then ``q`` blocks of ``tau`` rows are drawn uniformly
with replacement and rescaled by ``sqrt(K/q)``.  The Hadamard-based kinds
never materialize ``Pi``; they apply sign flips, a fast Walsh-Hadamard
transform and (garbled kind) a secret row permutation.

Ensemble sizes: a block-SRHT key is its signature vector, so there are
``2**N`` of them; the garbled variant adds a permutation, giving
``2**N * N!``.  See :func:`blocksketch.security.ensemble_size`.
"""
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
import itertools
import math

import numpy as np

from . import rng
from .errors import CapacityError, DimensionError
from .linalg import Partition, fwht_inplace, is_power_of_two

MAX_ENUMERATION = 100_000


class ProjectionKind(str, Enum):
    IDENTITY = "identity"
    HAAR = "haar"
    BLOCK_SRHT = "blocksrht"
    GARBLED_SRHT = "garbled"
    RADEMACHER = "rademacher"
    # dense N(0, 1/N) comparison sketch; not orthonormal
    GAUSSIAN = "gaussian"

    @property
    def orthonormal(self):
        return self not in (ProjectionKind.RADEMACHER, ProjectionKind.GAUSSIAN)

    @property
    def hadamard(self):
        return self in (ProjectionKind.BLOCK_SRHT, ProjectionKind.GARBLED_SRHT)

    @property
    def dense(self):
        return self in (ProjectionKind.HAAR, ProjectionKind.RADEMACHER, ProjectionKind.GAUSSIAN)


@dataclass(frozen=True, eq=False)
class Projection:
    """An ``N x N`` projection, stored implicitly where its structure allows.

    ``signature`` is the diagonal of ``D`` for the Hadamard kinds,
    ``permutation`` the row map of the garbled kind (row ``i`` of the output
    is row ``permutation[i]`` of ``H D M``), and ``dense`` the explicit
    matrix for Haar, Rademacher and Gaussian kinds.
    """

    kind: ProjectionKind
    n: int
    seed: int = 0
    signature: np.ndarray = None
    permutation: np.ndarray = None
    dense: np.ndarray = None

    def apply(self, M):
        return apply_projection(self, M)

    def apply_transpose(self, M):
        return apply_projection_transpose(self, M)

    def to_record(self):
        """Text record ``kind=<kind>;n=<N>;seed=<seed>``; never contains the matrix."""
        return f"kind={self.kind.value};n={self.n};seed={self.seed}"

    @classmethod
    def from_record(cls, text):
        fields = dict(part.split("=", 1) for part in text.strip().split(";"))
        return build_projection(ProjectionKind(fields["kind"]), int(fields["n"]), int(fields["seed"]))


def build_projection(kind, n, seed=0):
    """Draw a projection of the given kind; deterministic in ``(kind, n, seed)``."""
    kind = ProjectionKind(kind)
    if n < 2:
        raise DimensionError("projection dimension must be at least 2")
    if kind.hadamard and not is_power_of_two(n):
        raise DimensionError(f"Hadamard projections need a power-of-two dimension, got {n}")
    if kind is ProjectionKind.IDENTITY:
        return Projection(kind, n, seed)
    if kind.hadamard:
        signature = 2.0 * rng.stream(seed, "signature").integers(0, 2, n) - 1.0
        perm = rng.permutation(seed, n) if kind is ProjectionKind.GARBLED_SRHT else None
        return Projection(kind, n, seed, signature=signature, permutation=perm)
    if kind is ProjectionKind.HAAR:
        g = rng.stream(seed, "haar").standard_normal((n, n))
        q, r = np.linalg.qr(g)
        # sign fix on diag(R) makes Q Haar distributed
        q *= np.where(np.diag(r) < 0, -1.0, 1.0)
        return Projection(kind, n, seed, dense=q)
    if kind is ProjectionKind.RADEMACHER:
        signs = 2.0 * rng.stream(seed, "rademacher").integers(0, 2, (n, n)) - 1.0
        return Projection(kind, n, seed, dense=signs / math.sqrt(n))
    g = rng.stream(seed, "gaussian").standard_normal((n, n))
    return Projection(kind, n, seed, dense=g / math.sqrt(n))


def _as_rows(P, M):
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] != P.n:
        raise DimensionError(f"{M.shape[0]} rows do not match projection of size {P.n}")
    return M


def apply_projection(P, M):
    """Return ``Pi @ M``; ``O(N c log N)`` for Hadamard kinds, ``O(N^2 c)`` for dense ones."""
    M = _as_rows(P, M)
    if P.kind is ProjectionKind.IDENTITY:
        return M.copy()
    if P.dense is not None:
        return P.dense @ M
    out = M * (P.signature if M.ndim == 1 else P.signature[:, None])
    out = fwht_inplace(np.ascontiguousarray(out))
    if P.permutation is not None:
        out = out[P.permutation]
    return out


def apply_projection_transpose(P, M):
    M = _as_rows(P, M)
    if P.kind is ProjectionKind.IDENTITY:
        return M.copy()
    if P.dense is not None:
        return P.dense.T @ M
    out = np.array(M, dtype=np.float64, order="C", copy=True)
    if P.permutation is not None:
        out[P.permutation] = M
    fwht_inplace(out)
    return out * (P.signature if M.ndim == 1 else P.signature[:, None])


def projection_matrix(P):
    """Materialize ``Pi`` (intended for small ``N`` and for test oracles)."""
    if P.dense is not None:
        return P.dense.copy()
    return apply_projection(P, np.eye(P.n))


@dataclass(frozen=True)
class SketchConfig:
    n: int
    d: int
    k: int
    r: int
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.n % self.k:
            raise DimensionError(f"K={self.k} must divide N={self.n}")
        if self.r % self.tau:
            raise DimensionError(f"r={self.r} must be a multiple of tau={self.tau}")
        if self.r <= self.d:
            raise DimensionError(f"need q > d/tau, i.e. r > d (r={self.r}, d={self.d})")

    @property
    def tau(self):
        return self.n // self.k

    @property
    def q(self):
        return self.r // self.tau

    @property
    def partition(self):
        return Partition(self.n, self.k)


@dataclass(frozen=True)
class BlockSample:
    """Block indices drawn for one sketch (0-based, draw order, duplicates kept)."""

    indices: tuple
    k: int

    @property
    def q(self):
        return len(self.indices)

    @property
    def scale_squared(self):
        return Fraction(self.k, self.q)

    @property
    def scale(self):
        return math.sqrt(self.k / self.q)


def sample_blocks(cfg, seed):
    draws = rng.stream(seed, "sampling").integers(0, cfg.k, cfg.q)
    return BlockSample(tuple(int(j) for j in draws), cfg.k)


def assemble_sketch(P, sample, part, A):
    """``S_p A``: the sampled blocks of ``Pi A`` stacked in draw order, times ``sqrt(K/q)``."""
    if sample.k != part.k or P.n != part.n:
        raise DimensionError("projection, sample and partition disagree")
    PA = apply_projection(P, A)
    return sample.scale * np.concatenate([PA[part.block(j)] for j in sample.indices])


def sketch_matrix(P, sample, part):
    """Explicit ``r x N`` sketching matrix ``Omega_p Pi``."""
    Pi = projection_matrix(P)
    return sample.scale * np.concatenate([Pi[part.block(j)] for j in sample.indices])


@dataclass(frozen=True)
class SketchOperator:
    projection: Projection
    sample: BlockSample
    partition: Partition

    @property
    def n(self):
        return self.partition.n

    @property
    def shape(self):
        return (self.sample.q * self.partition.tau, self.partition.n)

    def apply(self, M):
        return assemble_sketch(self.projection, self.sample, self.partition, M)

    def to_dense(self):
        return sketch_matrix(self.projection, self.sample, self.partition)


def gram_expectation_oracle(P, part, q):
    """Exact mean of ``S^T S`` over every ``q``-subset of blocks, each block scaled by ``sqrt(K/q)``."""
    count = math.comb(part.k, q)
    if count > MAX_ENUMERATION:
        raise CapacityError(f"{count} subsets exceed the enumeration limit {MAX_ENUMERATION}")
    Pi = projection_matrix(P)
    total = np.zeros((part.n, part.n))
    for subset in itertools.combinations(range(part.k), q):
        S = math.sqrt(part.k / q) * np.concatenate([Pi[part.block(j)] for j in subset])
        total += S.T @ S
    return total / count
