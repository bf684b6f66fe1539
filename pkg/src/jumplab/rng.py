"""Counter-based random substreams for reproducible parallel simulation.

Every path owns its own streams, keyed by (master seed, path index, channel),
so no path's noise depends on another path or on execution order.  Channel 0
carries the jump structure (event times and marks), channel 1 the Wiener
increments; separating them keeps the Wiener draws stable when the jump count
changes.
"""

from __future__ import annotations

import numpy as np

JUMP_CHANNEL = 0
WIENER_CHANNEL = 1
INIT_CHANNEL = 2
PROBE_CHANNEL = 3  # check-time sampling (random probe points, map arguments)


def substream(seed: int, path_index: int, channel: int) -> np.random.Generator:
    """Return the generator for one (seed, path, channel) cell.

    Philox is counter-based: streams for distinct keys are independent and
    can be created in any order with identical results.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(path_index, channel))
    return np.random.Generator(np.random.Philox(ss))
