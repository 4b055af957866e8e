"""Counter-based random streams.

Every random value in the package is a pure function of (seed, stream id,
step): the stream for a triple is defined as the output of a Philox generator
keyed with ``[seed, stream]`` and started at counter block ``step << 64``.
Because nothing is shared between triples, results are independent of call
order and of how work is split across threads.

``stream_generator`` returns a generator positioned at that state.  It reuses
a thread-local scratch bit generator, which is ~4x faster than constructing a
fresh ``Philox`` per call and bit-identical to doing so.
"""

from __future__ import annotations

import threading

import numpy as np
from numpy.random import Generator, Philox

# stream-id tags keep unrelated consumers of the same seed apart
NOISE_STREAM = 0 << 48
PARTICIPATION_STREAM = 1 << 48
DATA_STREAM = 2 << 48
JITTER_STREAM = 4 << 48

_scratch = threading.local()


def stream_generator(seed: int, stream: int, step: int) -> Generator:
    """Generator for the (seed, stream, step) triple.

    Values are identical to
    ``Generator(Philox(key=[seed, stream], counter=[0, step, 0, 0]))``.
    """
    if seed < 0 or stream < 0 or step < 0:
        raise ValueError("seed, stream and step must be non-negative")
    try:
        bitgen, gen = _scratch.pair
    except AttributeError:
        bitgen = Philox(key=[0, 0])
        gen = Generator(bitgen)
        _scratch.pair = (bitgen, gen)
    bitgen.state = {
        "bit_generator": "Philox",
        "state": {
            "counter": np.array([0, step, 0, 0], dtype=np.uint64),
            "key": np.array([seed, stream], dtype=np.uint64),
        },
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }
    return gen


def reference_stream_generator(seed: int, stream: int, step: int) -> Generator:
    """Slow-path construction the fast path must match bit for bit."""
    return Generator(Philox(key=[seed, stream], counter=[0, step, 0, 0]))
