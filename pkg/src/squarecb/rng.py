"""Labelled random streams.

Every run derives independent generators from one master seed.  A stream is
a Philox (counter-based) bit generator keyed by ``SeedSequence(seed,
spawn_key=(label_id,))``, so environment contexts, loss noise, action
sampling and oracle randomness never share draws, and adding draws to one
stream cannot shift another.
"""
from __future__ import annotations

import numpy as np

STREAM_IDS = {
    "context": 1,
    "noise": 2,
    "action": 3,
    "oracle": 4,
    "instance": 5,
    "perturbation": 6,
}


def stream(seed: int, label: str) -> np.random.Generator:
    try:
        key = STREAM_IDS[label]
    except KeyError:
        raise ValueError(f"unknown stream label {label!r}") from None
    ss = np.random.SeedSequence(int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))


def round_stream(seed: int, label: str, t: int) -> np.random.Generator:
    """Generator for a single (label, round) cell; used where a quantity must
    be recomputable from the round index alone."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAM_IDS[label], int(t)))
    return np.random.Generator(np.random.Philox(ss))
