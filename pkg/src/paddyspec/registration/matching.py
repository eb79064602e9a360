"""Brute-force Hamming matching and distance-sorted filtering."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RegistrationError


@dataclass(frozen=True)
class Match:
    """Nearest-neighbor correspondence between descriptor indices."""

    index_a: int
    index_b: int
    distance: int


def hamming_distance(d1: np.ndarray, d2: np.ndarray) -> int:
    """Popcount of the XOR of two packed 256-bit descriptors."""
    return int(np.bitwise_count(np.bitwise_xor(d1, d2)).sum())


def match_bruteforce(descs_a: np.ndarray, descs_b: np.ndarray,
                     chunk: int = 512) -> list[Match]:
    """For each descriptor in A, its nearest neighbor in B by Hamming distance.

    Ties break toward the lowest B index; result order follows A. Equivalent
    to the exhaustive pairwise scan.
    """
    if len(descs_a) == 0 or len(descs_b) == 0:
        raise RegistrationError("match", "cannot match against an empty descriptor set")
    a64 = np.ascontiguousarray(descs_a).view(np.uint64)
    b64 = np.ascontiguousarray(descs_b).view(np.uint64)
    matches: list[Match] = []
    for start in range(0, len(a64), chunk):
        block = a64[start:start + chunk]
        dists = np.bitwise_count(block[:, None, :] ^ b64[None, :, :]).sum(
            axis=2, dtype=np.int32)
        nearest = dists.argmin(axis=1)
        best = dists[np.arange(len(block)), nearest]
        for row in range(len(block)):
            matches.append(Match(index_a=start + row,
                                 index_b=int(nearest[row]),
                                 distance=int(best[row])))
    return matches


def filter_matches(matches: list[Match], drop_fraction: float = 0.10,
                   drop_best: bool = False) -> list[Match]:
    """Drop the worst ceil(N * drop_fraction) matches by distance.

    ``drop_best=True`` flips the direction and discards the smallest-distance
    matches instead. Output is ordered ascending by distance either way.
    """
    if not 0.0 <= drop_fraction < 1.0:
        raise RegistrationError("filter",
                                f"drop_fraction must lie in [0, 1), got {drop_fraction}")
    ordered = sorted(matches, key=lambda m: (m.distance, m.index_a, m.index_b))
    n_drop = math.ceil(len(ordered) * drop_fraction)
    if n_drop == 0:
        return ordered
    return ordered[n_drop:] if drop_best else ordered[:len(ordered) - n_drop]
