"""Counter-keyed random streams.

Every draw is addressed by ``(seed, stream tag, counter)`` through
:class:`numpy.random.SeedSequence` feeding a Philox generator, so a path's
increments depend only on its index and the step, never on how many paths
are simulated or in what order chunks are processed.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# stream tags
BROWNIAN = 0
JUMPS = 1
STABLE = 2
INSTANCES = 3

# exact jump simulation draws whole blocks of paths from one key
JUMP_BLOCK = 4096


def _seq(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & _MASK64, *[int(k) for k in key]])


def generator(seed: int, *key: int) -> np.random.Generator:
    """Philox generator keyed by ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(_seq(seed, *key)))


def normals(seed: int, tag: int, step: int, n: int, dim: int) -> np.ndarray:
    """Standard normals of shape ``(n, dim)`` for one time step.

    Row ``i`` is the same for every ``n > i``: numpy fills the array
    sequentially from the keyed stream.
    """
    return generator(seed, tag, step).standard_normal((n, dim))


def derive_seed(master: int, index: int) -> int:
    """Child seed for check ``index`` of a run with ``master`` seed."""
    return int(_seq(master, index).generate_state(1, np.uint64)[0])
