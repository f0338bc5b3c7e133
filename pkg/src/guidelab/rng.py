"""Reproducible random streams.

Every sampling run owns one stream: a Philox counter-based bit generator
keyed by ``SeedSequence(entropy=master_seed, spawn_key=(run_index,))``,
with Gaussians drawn through numpy's ziggurat ``standard_normal``.  A
run's draws therefore depend only on (master_seed, run_index) and never
on scheduling, worker count, or the order runs complete in.

Draw order within a run is fixed and documented at the call sites: the
trajectory initialization comes first, then any per-step noise in loop
order (domain renoising before filter noise inside a guidance window;
re-diffusion noise before filter noise between restart iterations).
"""

from __future__ import annotations

import numpy as np

__all__ = ["run_rng"]


def run_rng(master_seed: int, run_index: int = 0) -> np.random.Generator:
    """Philox stream for run ``run_index`` of an experiment."""
    if run_index < 0:
        raise ValueError("run_index must be >= 0")
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(run_index),))
    return np.random.Generator(np.random.Philox(seq))
