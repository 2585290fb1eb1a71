"""Named, independent random streams derived from a single master seed.

Every consumer of randomness asks for a stream by name (``"signature"``,
``"permutation"``, ``"haar"``, ``"sampling"``, ...) plus optional keys
(integers such as an iteration index, or short strings).  Streams are Philox (counter-based)
generators seeded through :class:`numpy.random.SeedSequence` with the name
hashed into the spawn key, so two streams never overlap and adding a new
consumer never perturbs the existing ones.
"""
import zlib

import numpy as np


def _name_key(name):
    return zlib.crc32(name.encode("utf-8"))


def _key(k):
    return _name_key(k) if isinstance(k, str) else int(k)


def _sequence(seed, name, keys):
    if int(seed) < 0:
        raise ValueError("seed must be non-negative")
    return np.random.SeedSequence(
        entropy=int(seed), spawn_key=(_name_key(name), *(_key(k) for k in keys))
    )


def stream(seed, name, *keys):
    """Return a fresh generator for the stream ``name`` under ``seed``."""
    return np.random.Generator(np.random.Philox(_sequence(seed, name, keys)))


def derive_seed(seed, name, *keys):
    """Derive a 63-bit child seed, for handing a sub-experiment its own master seed."""
    state = _sequence(seed, name, keys).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))


def permutation(seed, n):
    """Uniform random permutation of ``range(n)`` (Fisher-Yates via numpy)."""
    return stream(seed, "permutation").permutation(n)
