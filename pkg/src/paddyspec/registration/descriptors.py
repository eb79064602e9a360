"""Rotated binary descriptors: 256 pairwise intensity tests on a smoothed patch.

The test pattern is fixed at import time (seeded isotropic Gaussian point
pairs, radius <= 13 so any rotation stays inside a 16-pixel border) and is
rotated by each keypoint's orientation before sampling. One bit per test:
smoothed(a) < smoothed(b).
"""
from __future__ import annotations

import numpy as np

from .errors import RegistrationError
from .keypoints import (
    N_LEVELS,
    SCALE_FACTOR,
    Keypoint,
    _coerce_gray,
    build_pyramid,
    gaussian_smooth,
)

DESCRIPTOR_BITS = 256
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8
PATCH_BORDER = 16
_PATTERN_RADIUS = 13.0


def _make_test_pattern(n_tests: int = DESCRIPTOR_BITS,
                       sigma: float = 31.0 / 5.0) -> np.ndarray:
    """(n_tests, 2, 2) integer offsets [(ax, ay), (bx, by)] per test."""
    rng = np.random.default_rng(9622153)
    pairs = np.empty((n_tests, 2, 2), dtype=np.int64)
    count = 0
    while count < n_tests:
        cand = np.round(rng.normal(0.0, sigma, size=(4,)))
        ax, ay, bx, by = cand
        if ax * ax + ay * ay > _PATTERN_RADIUS ** 2:
            continue
        if bx * bx + by * by > _PATTERN_RADIUS ** 2:
            continue
        # pair points at least 2 px apart, so rotation + rounding can never
        # collapse a test onto a single pixel
        if (ax - bx) ** 2 + (ay - by) ** 2 < 4.0:
            continue
        pairs[count, 0] = (ax, ay)
        pairs[count, 1] = (bx, by)
        count += 1
    return pairs


TEST_PATTERN = _make_test_pattern()


def compute_descriptors(img, keypoints: list[Keypoint],
                        n_levels: int = N_LEVELS,
                        scale_factor: float = SCALE_FACTOR,
                        ) -> tuple[np.ndarray, list[int]]:
    """Descriptors for keypoints at least 16 px inside their pyramid level.

    Returns (packed descriptors (M, 32) uint8, kept original indices). Border
    keypoints are dropped and reported through the kept-index list.
    """
    gray = _coerce_gray(img)
    if not keypoints:
        raise RegistrationError("describe", "no keypoints to describe")
    levels = build_pyramid(gray, n_levels, scale_factor)
    smoothed = {}

    ax = TEST_PATTERN[:, 0, 0].astype(np.float64)
    ay = TEST_PATTERN[:, 0, 1].astype(np.float64)
    bx = TEST_PATTERN[:, 1, 0].astype(np.float64)
    by = TEST_PATTERN[:, 1, 1].astype(np.float64)
    px = np.concatenate([ax, bx])
    py = np.concatenate([ay, by])

    kept: list[int] = []
    rows: list[np.ndarray] = []
    by_level: dict[int, list[int]] = {}
    for idx, kp in enumerate(keypoints):
        by_level.setdefault(kp.octave, []).append(idx)

    descs_by_index: dict[int, np.ndarray] = {}
    for lvl, indices in sorted(by_level.items()):
        if lvl not in smoothed:
            smoothed[lvl] = gaussian_smooth(levels[lvl])
        img_l = smoothed[lvl]
        h, w = img_l.shape
        xs = np.array([keypoints[i].x_lvl for i in indices], dtype=np.intp)
        ys = np.array([keypoints[i].y_lvl for i in indices], dtype=np.intp)
        ok = ((xs >= PATCH_BORDER) & (xs < w - PATCH_BORDER)
              & (ys >= PATCH_BORDER) & (ys < h - PATCH_BORDER))
        if not ok.any():
            continue
        sel = np.nonzero(ok)[0]
        angles = np.array([keypoints[indices[i]].angle for i in sel])
        cos = np.cos(angles)[:, None]
        sin = np.sin(angles)[:, None]
        rx = np.round(cos * px[None, :] - sin * py[None, :]).astype(np.intp)
        ry = np.round(sin * px[None, :] + cos * py[None, :]).astype(np.intp)
        sample_x = xs[sel][:, None] + rx
        sample_y = ys[sel][:, None] + ry
        vals = img_l[sample_y, sample_x]
        bits = vals[:, :DESCRIPTOR_BITS] < vals[:, DESCRIPTOR_BITS:]
        packed = np.packbits(bits, axis=1)
        for row, i in enumerate(sel):
            descs_by_index[indices[i]] = packed[row]

    if not descs_by_index:
        raise RegistrationError(
            "describe", "every keypoint fell inside the 16 px descriptor border")
    for idx in sorted(descs_by_index):
        kept.append(idx)
        rows.append(descs_by_index[idx])
    return np.stack(rows), kept
