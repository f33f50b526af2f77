"""Counter-based random streams.

Every stream is a Philox generator keyed by a 64-bit seed, so the value
drawn at position ``t`` depends only on ``(seed, t)``. Per-realization
seeds come from :func:`derive_seed`, which hashes ``(master_seed, index,
role)`` and therefore does not depend on execution order.
"""

import numpy as np

ERASURE = 0
PLANT_NOISE = 1

_MASK64 = (1 << 64) - 1


def _key(seed):
    return np.random.SeedSequence(int(seed) & _MASK64).generate_state(2, np.uint64)


def stream(seed):
    """Return a Philox-backed generator for ``seed``."""
    return np.random.Generator(np.random.Philox(key=_key(seed)))


def derive_seed(master_seed, index, role):
    """64-bit seed for realization ``index`` and stream ``role``."""
    ss = np.random.SeedSequence([int(master_seed) & _MASK64, int(index), int(role)])
    return int(ss.generate_state(1, np.uint64)[0])


def uniforms(seed, count, start=0):
    """``count`` uniforms on [0, 1) starting at counter position ``start``."""
    bitgen = np.random.Philox(key=_key(seed))
    if start:
        # Philox emits four 64-bit words per counter increment; one double
        # consumes one word.
        q, r = divmod(start, 4)
        bitgen.advance(q)
        gen = np.random.Generator(bitgen)
        if r:
            gen.random(r)
        return gen.random(count)
    return np.random.Generator(bitgen).random(count)
