"""Deterministic random substreams keyed by (root seed, index, ...)."""

import numpy as np


def substream(seed, *keys):
    """Philox generator for the substream ``keys`` under ``seed``.

    The stream depends only on ``(seed, keys)``, never on how many other
    streams were drawn before, so parallel and serial runs agree.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
