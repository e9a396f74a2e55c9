"""Named random substreams derived from a single root seed."""

import zlib

import numpy as np

STREAMS = ("data", "init", "episodes", "dropout", "batch", "probe", "split")


def substream(root_seed: int, name: str, *keys: int) -> np.random.Generator:
    """Return an independent generator for ``name`` keyed by ``keys``.

    The same (root_seed, name, keys) always yields the same stream, so any
    draw can be reproduced without replaying earlier ones.
    """
    if name not in STREAMS:
        raise ValueError(f"unknown random stream {name!r}; expected one of {STREAMS}")
    tag = zlib.crc32(name.encode("utf-8"))
    entropy = [int(root_seed) & 0xFFFFFFFF, tag] + [int(k) & 0xFFFFFFFF for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
