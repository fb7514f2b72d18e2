"""Deterministic RNG fan-out.

A single master seed is expanded into independent named substreams so
that changing how one stage consumes randomness never perturbs another
(simulation noise, dataset sampling, weight init, and task shuffling all
draw from separate generators).
"""

from __future__ import annotations

import zlib

import numpy as np

from .errors import ConfigurationError


def _label_words(labels: tuple) -> list[int]:
    words = []
    for lab in labels:
        if isinstance(lab, str):
            words.append(zlib.crc32(lab.encode("utf-8")))
        elif isinstance(lab, (int, np.integer)):
            if lab < 0:
                raise ConfigurationError(f"seed labels must be non-negative, got {lab}")
            words.append(int(lab))
        else:
            raise ConfigurationError(f"unsupported seed label type: {type(lab).__name__}")
    return words


def substream(master_seed: int, *labels) -> np.random.Generator:
    """Generator keyed by the master seed plus a path of labels.

    Labels may be strings (hashed stably across runs and platforms) or
    non-negative integers (used as-is).
    """
    if master_seed < 0:
        raise ConfigurationError(f"master seed must be non-negative, got {master_seed}")
    return np.random.default_rng([int(master_seed)] + _label_words(labels))


def derive_seed(master_seed: int, *labels) -> int:
    """Collapse a substream key to a single integer seed.

    Used where an API takes a plain seed instead of a generator.
    """
    if master_seed < 0:
        raise ConfigurationError(f"master seed must be non-negative, got {master_seed}")
    seq = np.random.SeedSequence([int(master_seed)] + _label_words(labels))
    return int(seq.generate_state(1, dtype=np.uint64)[0])
