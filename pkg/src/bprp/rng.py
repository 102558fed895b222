"""Counter-based random-number streams.

Every stochastic component draws from a substream derived from the run
seed plus a label path, e.g. ``substream(seed, "packets", window_index,
beacon_id)``.  Substreams built from the same path are identical;
substreams built from different paths are statistically independent.
This is what makes whole-pipeline outputs byte-reproducible even when
the order of intermediate computations changes.

String labels are folded to integers with a keyed blake2b hash so that
beacon ids and method names can participate in a path without any
global registry.
"""

import hashlib

import numpy as np

_LABEL_BYTES = 8


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        v = int(label)
        if v < 0:
            raise ValueError(f"negative path label: {v}")
        return v
    if isinstance(label, str):
        digest = hashlib.blake2b(
            label.encode("utf-8"), digest_size=_LABEL_BYTES, key=b"bprp-path"
        ).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"path labels must be int or str, got {type(label).__name__}")


def derive_seed(seed: int, *path) -> tuple:
    """Return the spawn-key tuple for a labeled substream."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return (int(seed),) + tuple(_label_to_int(p) for p in path)


def substream(seed: int, *path) -> np.random.Generator:
    """Generator for the substream identified by ``(seed, *path)``.

    Uses the Philox counter-based bit generator, so streams with
    different spawn keys never collide regardless of how many values
    each consumes.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(derive_seed(seed, *path))))
