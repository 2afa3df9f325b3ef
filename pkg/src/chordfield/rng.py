"""Named, counter-based random substreams for reproducible parallel runs.

Every run owns a root key (experiment name, seed index). Subsystems draw from
independent substreams addressed by name, so two conditions of the same seed
consume identical streams for shared decisions (placement, ...) and disjoint
streams for everything else, no matter how many draws each condition makes.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(experiment: str, seed: int, *names: str) -> np.random.Generator:
    """Return a Generator for the (experiment, seed, *names) substream.

    Backed by Philox (counter-based), keyed by a BLAKE2b hash of the address,
    so streams are stable across platforms and numpy versions.
    """
    address = ":".join([experiment, str(int(seed)), *names]).encode()
    digest = hashlib.blake2b(address, digest_size=16).digest()
    key = np.frombuffer(digest, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
