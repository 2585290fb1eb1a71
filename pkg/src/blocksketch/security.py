"""Garbling, key-ensemble accounting and secrecy experiments.

Encryption here is left multiplication by a secret projection,
``Enc_Pi(M) = Pi @ M``.  Two experiments live in this module:

* :func:`srht_distinguisher` shows the plain (ungarbled) 2x2 randomized
  Hadamard transform leaks which of two known bases was encrypted, by
  looking for zero entries in the ciphertext.
* :func:`secrecy_frequency_test` checks perfect secrecy empirically for a
  finite orthogonal group with uniformly drawn keys: the ciphertext
  distribution must not depend on the message.

The garbled transform is only claimed secure against bounded adversaries,
on the assumption that one-way permutations exist; nothing in this module
attempts to check that.
"""
from dataclasses import dataclass
import io
import itertools
import math

import numpy as np

from . import rng
from .errors import ClosureError, DimensionError, PreconditionError
from .linalg import fwht
from .sketch import ProjectionKind

MATCH_TOL = 1e-8
ZERO_TOL = 1e-12
MAX_GROUP = 256

U0 = "U0"
U1 = "U1"


def garble(seed, n):
    """Secret row permutation composed with the block-SRHT in the garbled kind."""
    if n < 2:
        raise DimensionError("need n >= 2")
    return rng.permutation(seed, n)


def encrypt(Pi, M):
    return np.asarray(Pi) @ np.asarray(M)


def decrypt(Pi, C):
    return np.asarray(Pi).T @ np.asarray(C)


def hadamard2():
    return fwht(np.eye(2))


def srht_distinguisher(C):
    """Guess which plaintext produced a 2x2 randomized-Hadamard ciphertext.

    ``H D I`` never has a zero entry, while ``H D H`` always has two, so a
    zero entry means the plaintext was the Hadamard basis (``U1``).
    """
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (2, 2):
        raise DimensionError(f"expected a 2x2 ciphertext, got {C.shape}")
    return U1 if np.any(np.abs(C) <= ZERO_TOL) else U0


def distinguisher_trials():
    """Run the distinguisher on every signature setting and both plaintexts.

    Returns a list of ``(signature, truth, guess)`` tuples.
    """
    H = hadamard2()
    plaintexts = {U0: np.eye(2), U1: H}
    out = []
    for signs in itertools.product((1.0, -1.0), repeat=2):
        key = H @ np.diag(signs)
        for label, U in plaintexts.items():
            out.append((signs, label, srht_distinguisher(encrypt(key, U))))
    return out


@dataclass(frozen=True, eq=False)
class FiniteOrthogroup:
    """Finite group of ``N x N`` orthogonal matrices, validated on construction."""

    elements: tuple

    def __post_init__(self):
        if not self.elements:
            raise ClosureError("empty group")
        stack = np.array(self.elements, dtype=np.float64)
        object.__setattr__(self, "_flat", stack.reshape(len(self.elements), -1))
        n = stack.shape[1]
        if self.find(np.eye(n)) is None:
            raise ClosureError("identity missing")
        for g in stack:
            if self.find(g.T) is None:
                raise ClosureError("not closed under transpose")
        for g, h in itertools.product(stack, repeat=2):
            if self.find(g @ h) is None:
                raise ClosureError("not closed under products")

    @property
    def order(self):
        return len(self.elements)

    @property
    def n(self):
        return np.asarray(self.elements[0]).shape[0]

    def find(self, M):
        """Index of the element within ``1e-8`` of ``M``, or None."""
        dist = np.max(np.abs(self._flat - np.asarray(M).reshape(1, -1)), axis=1)
        i = int(np.argmin(dist))
        return i if dist[i] <= MATCH_TOL else None

    def match_many(self, Ms):
        flat = np.asarray(Ms).reshape(len(Ms), -1)
        dist = np.max(np.abs(flat[:, None, :] - self._flat[None, :, :]), axis=2)
        idx = np.argmin(dist, axis=1)
        if np.any(dist[np.arange(len(idx)), idx] > MATCH_TOL):
            raise ClosureError("ciphertext outside the group")
        return idx


def signed_permutation_group(n):
    """All ``2**n * n!`` signed permutation matrices of size ``n``."""
    elements = []
    for perm in itertools.permutations(range(n)):
        P = np.eye(n)[list(perm)]
        for signs in itertools.product((1.0, -1.0), repeat=n):
            elements.append(np.diag(signs) @ P)
    return FiniteOrthogroup(tuple(elements))


def trivial_group(n):
    return FiniteOrthogroup((np.eye(n),))


def secrecy_threshold(order, trials):
    return 3.0 * math.sqrt(order / trials)


def secrecy_frequency_test(G, trials, seed, exact=False):
    """Largest total-variation distance between ciphertext distributions of any two messages.

    Every group element is used as a message.  Keys are drawn uniformly
    (``trials`` per message) or, with ``exact=True``, enumerated once each.
    """
    if G.order > MAX_GROUP:
        raise PreconditionError(f"group of order {G.order} exceeds {MAX_GROUP}")
    if not exact and trials < 100 * G.order:
        raise PreconditionError("need at least 100 trials per group element")
    stack = np.array(G.elements, dtype=np.float64)
    hists = []
    for mi, message in enumerate(stack):
        if exact:
            keys = stack
        else:
            keys = stack[rng.stream(seed, "secrecy-keys", mi).integers(0, G.order, trials)]
        cipher = np.einsum("kij,jl->kil", keys, message)
        counts = np.bincount(G.match_many(cipher), minlength=G.order)
        hists.append(counts / counts.sum())
    tv = 0.0
    for p, q in itertools.combinations(hists, 2):
        tv = max(tv, 0.5 * float(np.abs(p - q).sum()))
    return tv


def ensemble_size(kind, n):
    """Number of distinct keys the implementation can draw for ``kind`` at size ``n``.

    Block-SRHT keys are signature vectors (``2**n``), garbled keys add a
    permutation (``2**n * n!``), Rademacher keys are sign matrices
    (``2**(n*n)``).  Counting does not require ``n`` to be a power of two.
    """
    kind = ProjectionKind(kind)
    if n < 1:
        raise DimensionError("n must be positive")
    if kind is ProjectionKind.BLOCK_SRHT:
        return 2 ** n
    if kind is ProjectionKind.GARBLED_SRHT:
        return 2 ** n * math.factorial(n)
    if kind is ProjectionKind.RADEMACHER:
        return 2 ** (n * n)
    raise PreconditionError(f"no finite ensemble for {kind.value}")


def result_rows_csv(rows):
    """CSV with columns ``test,param,value,threshold,pass``, rows sorted by ``(test, param)``."""
    buf = io.StringIO()
    buf.write("test,param,value,threshold,pass\n")
    for test, param, value, threshold, ok in sorted(rows, key=lambda r: (r[0], r[1])):
        buf.write(f"{test},{param},{_fmt(value)},{_fmt(threshold)},{str(bool(ok)).lower()}\n")
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))
