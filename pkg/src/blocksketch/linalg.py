"""Dense numerical primitives.

Fast Walsh-Hadamard transform, orthonormal bases, spectral norms, leverage
and block-leverage scores, the subspace-embedding distortion, and the CSV
matrix format used for data exchange.  Matrices are plain ``float64`` numpy
arrays; all functions are pure apart from :func:`fwht_inplace`.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.linalg import solve_triangular

from . import rng
from .errors import ConvergenceError, DimensionError, PreconditionError, RankError

RANK_TOL = 1e-10
ORTHO_TOL = 1e-8


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Partition:
    """Contiguous split of ``n`` row indices into ``k`` equal blocks."""

    n: int
    k: int

    def __post_init__(self):
        if self.n < 1 or self.k < 1 or self.n % self.k:
            raise DimensionError(f"block count {self.k} must divide row count {self.n}")

    @property
    def tau(self):
        return self.n // self.k

    def block(self, i):
        if not 0 <= i < self.k:
            raise IndexError(f"block index {i} out of range for {self.k} blocks")
        return slice(i * self.tau, (i + 1) * self.tau)

    @property
    def blocks(self):
        return [self.block(i) for i in range(self.k)]


@dataclass(frozen=True)
class LeverageProfile:
    row_scores: np.ndarray
    block_scores: np.ndarray
    normalized_block_scores: np.ndarray


def fwht_inplace(x):
    """Apply the orthonormal Walsh-Hadamard matrix to ``x`` along axis 0, in place.

    ``x`` must be a C-contiguous float64 array whose first dimension is a
    power of two; a 2-D array is transformed column by column.  The
    butterflies run in ``log2(N)`` vectorized passes, so the cost is
    ``O(N log N)`` per column.  Returns ``x`` for convenience.
    """
    if not isinstance(x, np.ndarray) or x.dtype != np.float64 or not x.flags.c_contiguous:
        raise TypeError("fwht_inplace needs a C-contiguous float64 ndarray")
    n = x.shape[0]
    if not is_power_of_two(n):
        raise DimensionError(f"length {n} is not a power of two")
    v = x.reshape(n, -1)
    h = 1
    while h < n:
        pairs = v.reshape(n // (2 * h), 2, h, -1)
        top = pairs[:, 0].copy()
        pairs[:, 0] += pairs[:, 1]
        np.subtract(top, pairs[:, 1], out=pairs[:, 1])
        h *= 2
    v *= 1.0 / math.sqrt(n)
    return x


def fwht(x):
    """Out-of-place :func:`fwht_inplace`."""
    return fwht_inplace(np.array(x, dtype=np.float64, order="C", copy=True))


def orthonormal_basis(A):
    """Orthonormal basis of ``im(A)`` by Householder QR.

    Columns are sign-normalized so that ``R`` has a positive diagonal, which
    makes the result unique.  Raises :class:`RankError` when the smallest
    singular value falls below ``1e-10`` times the largest.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError("expected a matrix")
    n, d = A.shape
    if d > n:
        raise RankError(f"{n}x{d} matrix cannot have full column rank")
    q, r = np.linalg.qr(A)
    s = np.linalg.svd(r, compute_uv=False)
    if s[0] == 0 or s[-1] < RANK_TOL * s[0]:
        raise RankError("matrix is rank deficient")
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def least_squares(A, b):
    """Direct QR solve of ``min ||Ax - b||``."""
    A = np.asarray(A, dtype=np.float64)
    q, r = np.linalg.qr(A)
    s = np.linalg.svd(r, compute_uv=False)
    if s[0] == 0 or s[-1] < RANK_TOL * s[0]:
        raise RankError("matrix is rank deficient")
    return solve_triangular(r, q.T @ np.asarray(b, dtype=np.float64))


def spectral_norm(M, tol=1e-8, seed=0, block=8):
    """Largest singular value of ``M`` by subspace power iteration on its Gram matrix.

    A block of up to ``block`` seeded start vectors is iterated on the
    smaller of ``M^T M`` and ``M M^T`` with a Rayleigh-Ritz step each pass,
    so clustered top singular values (common for symmetric ``M`` with
    ``+-lambda`` pairs) do not stall convergence.  Stops when the top Ritz
    pair's residual is below ``tol`` relative, or the top Ritz value has
    stopped moving; gives up after ``10 * max(shape) * log(1/tol)`` passes.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.size == 0 or not np.any(M):
        return 0.0
    B = M.T @ M if M.shape[1] <= M.shape[0] else M @ M.T
    k = B.shape[0]
    p = min(block, k)
    V, _ = np.linalg.qr(rng.stream(seed, "spectral-start").standard_normal((k, p)))
    cap = int(math.ceil(10 * max(M.shape) * math.log(1.0 / tol)))
    lam = 0.0
    for _ in range(cap):
        W = B @ V
        ritz, vecs = np.linalg.eigh(V.T @ W)
        lam_new = float(ritz[-1])
        if lam_new <= 0.0:
            return 0.0
        top = V @ vecs[:, -1]
        resid = np.linalg.norm(B @ top - lam_new * top)
        if p == k or resid <= tol * lam_new or abs(lam_new - lam) <= 1e-3 * tol * lam_new:
            return math.sqrt(lam_new)
        lam = lam_new
        V, _ = np.linalg.qr(W)
    raise ConvergenceError("power iteration did not converge", math.sqrt(max(lam, 0.0)))


def block_scores(V, part):
    """Squared Frobenius norm of every block of rows of ``V`` (no orthonormality check)."""
    V = np.asarray(V, dtype=np.float64)
    if V.shape[0] != part.n:
        raise DimensionError(f"{V.shape[0]} rows do not match partition of {part.n}")
    rows = np.einsum("ij,ij->i", V, V)
    return rows.reshape(part.k, part.tau).sum(axis=1)


def leverage_profile(U, part):
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[0] != part.n:
        raise DimensionError("basis does not match partition")
    d = U.shape[1]
    if np.max(np.abs(U.T @ U - np.eye(d))) > ORTHO_TOL:
        raise PreconditionError("leverage scores need an orthonormal basis")
    rows = np.einsum("ij,ij->i", U, U)
    blocks = rows.reshape(part.k, part.tau).sum(axis=1)
    return LeverageProfile(rows, blocks, blocks / d)


def embedding_distortion(U, S):
    """``||I_d - (SU)^T (SU)||_2`` for a sketch ``S``.

    ``S`` is either an explicit ``r x N`` array or any object with an
    ``apply`` method mapping an ``N x d`` array to its sketch.
    """
    U = np.asarray(U, dtype=np.float64)
    if hasattr(S, "apply"):
        if getattr(S, "n", U.shape[0]) != U.shape[0]:
            raise DimensionError("sketch width does not match basis rows")
        SU = S.apply(U)
    else:
        S = np.asarray(S, dtype=np.float64)
        if S.ndim != 2 or S.shape[1] != U.shape[0]:
            raise DimensionError("sketch width does not match basis rows")
        SU = S @ U
    d = U.shape[1]
    return spectral_norm(np.eye(d) - SU.T @ SU)


def write_matrix(path, M):
    """Write ``M`` as CSV: a ``rows,cols`` header, then one row per line."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{M.shape[0]},{M.shape[1]}\n")
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows, cols = int(header[0]), int(header[1])
        data = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    M = np.array(data, dtype=np.float64).reshape(rows, cols) if rows else np.zeros((0, cols))
    if M.shape != (rows, cols):
        raise DimensionError(f"expected {rows}x{cols}, read {M.shape}")
    return M
