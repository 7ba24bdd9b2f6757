"""Per-path random streams.

Path ``i`` of a batch with base seed ``s`` owns ``SeedSequence([s, i])``.  Its
spawned children feed the Brownian increments, the excursion marks and the
optional within-step bridge maxima, so the marks never share state with the
driving noise and any path can be regenerated on its own, independent of how a
batch was scheduled.  Child ``k`` of a SeedSequence does not depend on how many
siblings are spawned, so adding a stream leaves the others unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STREAM_NAMES = ("increments", "marks", "bridge")


@dataclass(frozen=True)
class PathSeed:
    base_seed: int
    index: int = 0

    def __post_init__(self):
        for name in ("base_seed", "index"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    def sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.base_seed, self.index])

    def streams(self) -> dict[str, np.random.Generator]:
        children = self.sequence().spawn(len(STREAM_NAMES))
        return {k: np.random.default_rng(c) for k, c in zip(STREAM_NAMES, children)}

    def to_mapping(self) -> dict[str, int]:
        return {"base_seed": self.base_seed, "index": self.index}


def as_seed(seed) -> PathSeed:
    """Accept a PathSeed, an int, or a ``(base_seed, index)`` pair."""
    if isinstance(seed, PathSeed):
        return seed
    if isinstance(seed, (tuple, list)):
        return PathSeed(*seed)
    return PathSeed(int(seed), 0)
