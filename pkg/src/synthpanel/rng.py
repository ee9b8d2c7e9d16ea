"""Named, reproducible random streams built on the Philox counter-based generator.

Every consumer of randomness in this package derives its generator from a
user seed plus a tuple of stream labels (strings or integers), so draws are
independent across streams and bit-reproducible regardless of execution
order or worker count.
"""

from __future__ import annotations

import zlib

import numpy as np

_U64 = (1 << 64) - 1


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & _U64
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed: int, *labels) -> np.random.Generator:
    """Generator for the stream named by ``labels`` under ``seed``.

    Examples
    --------
    >>> g = stream(42, "noise", 3)
    >>> g2 = stream(42, "noise", 3)
    >>> float(g.normal()) == float(g2.normal())
    True
    """
    entropy = [int(seed) & _U64] + [_key_part(p) for p in labels]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
