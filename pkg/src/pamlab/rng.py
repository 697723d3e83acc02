"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by (seed, stream).  Philox is counter-based, so streams are independent,
reproducible bit-for-bit across platforms and thread counts, and cheap to
create on demand.
"""

from __future__ import annotations

import numpy as np

__all__ = ["philox_stream"]

_MASK64 = (1 << 64) - 1


def philox_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for the (seed, stream) Philox key."""
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative integers")
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
