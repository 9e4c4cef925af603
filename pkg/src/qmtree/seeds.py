"""Deterministic seed splitting for experiments.

One master 64-bit seed is expanded counter-style into independent per-trial
streams: the entropy of stream ``s`` of trial ``t`` is the tuple
(master, t, s) fed to numpy's SeedSequence. Oracle draws, verifier
randomness, and strategy randomness therefore vary independently, and any
single trial can be reproduced from (master, trial) alone.
"""

from __future__ import annotations

import numpy as np

ORACLE_STREAM = 0
VERIFIER_STREAM = 1
STRATEGY_STREAM = 2
META_STREAM = 3


def child_seed(master: int, trial: int, stream: int) -> int:
    """A 64-bit seed for the given (trial, stream) cell under the master seed."""
    seq = np.random.SeedSequence([int(master), int(trial), int(stream)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def child_rng(master: int, trial: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master), int(trial), int(stream)]))
