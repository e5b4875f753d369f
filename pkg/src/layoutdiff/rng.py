"""Counter-style RNG substreams.

Every random draw in the toolkit comes from a generator keyed by
``(seed, purpose, index...)`` so that work split across processes reproduces
the serial result exactly.
"""

import zlib

import numpy as np

_PURPOSE_IDS: dict[str, int] = {}


def _purpose_id(purpose: str) -> int:
    if purpose not in _PURPOSE_IDS:
        _PURPOSE_IDS[purpose] = zlib.crc32(purpose.encode())
    return _PURPOSE_IDS[purpose]


def substream(seed: int, purpose: str, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, purpose, *index)``."""
    key = (_purpose_id(purpose),) + tuple(int(i) for i in index)
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
