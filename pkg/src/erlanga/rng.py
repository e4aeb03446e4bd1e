"""Reproducible counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by (seed, replication index, purpose tag).  Philox is counter-based, so a
stream is fully determined by its key: parallel and serial execution of the
same (seed, rep, purpose) triples consume identical numbers, and adding a
new purpose never perturbs existing streams.
"""

from __future__ import annotations

import numpy as np

# Fixed codes; appending new purposes is fine, renumbering is not.
PURPOSES = {
    "events": 0,       # simulator event clock and event-type selection
    "init": 1,         # stationary initial-state draws
    "vwait": 2,        # exact virtual-wait draws from state
    "sde": 3,          # Brownian increments for limit diffusions
    "steady": 4,       # steady-state sampling
    "clt": 5,          # partial-sum CLT Monte Carlo
    "test": 6,         # property-test scratch streams
}


def stream(seed: int, rep: int, purpose: str) -> np.random.Generator:
    """Return the Philox generator for the (seed, rep, purpose) key."""
    try:
        code = PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown rng purpose {purpose!r}") from None
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep), code))
    return np.random.Generator(np.random.Philox(ss))


class UniformBlocks:
    """Blocked uniform supply for tight event loops.

    Drawing uniforms one call at a time through a Generator dominates the
    cost of a pure-Python event loop; this pulls blocks and hands them out
    one float at a time in stream order, so consumption order (and hence
    coupling between runs sharing a stream) is unchanged.
    """

    def __init__(self, gen: np.random.Generator, block: int = 8192):
        self._gen = gen
        self._block = block
        self._buf = gen.random(block)
        self._i = 0

    def next(self) -> float:
        i = self._i
        if i == self._block:
            self._buf = self._gen.random(self._block)
            i = 0
        self._i = i + 1
        return self._buf[i]
