"""Whole-pair registration: detect, describe, match, filter, estimate, warp.

The green channel drives feature detection in both modalities (it is the
one band present in RGB and R-G-NIR alike). The recovered homography maps
RGB coordinates into the R-G-NIR frame, and the RGB image is warped there
at the R-G-NIR resolution.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..imaging import ImageF, ImageFormatError, warp_perspective
from .descriptors import compute_descriptors
from .errors import RegistrationError
from .homography import Homography, RansacParams, RansacResult, estimate_homography
from .keypoints import detect_keypoints
from .matching import filter_matches, match_bruteforce

# capture hardware geometry: the survey camera sees a much narrower field
# than the phone, so a correct homography upscales RGB content into the
# R-G-NIR frame
RGNIR_FOV_DEGREES = 41.0
RGB_FOV_DEGREES = 123.0


@dataclass
class RegistrationParams:
    target_count: int = 10000
    drop_fraction: float = 0.10
    drop_best: bool = False
    ransac: RansacParams = field(default_factory=RansacParams)


@dataclass
class RegistrationDiagnostics:
    pair_id: str
    keypoints_a: int
    keypoints_b: int
    described_a: int
    described_b: int
    matches: int
    filtered: int
    inliers: int
    mean_residual: float
    homography: list[float]

    def record(self) -> str:
        """One structured-text record for the batch report."""
        h = " ".join(f"{v:.9g}" for v in self.homography)
        return (f"pair={self.pair_id} kp_a={self.keypoints_a} kp_b={self.keypoints_b} "
                f"desc_a={self.described_a} desc_b={self.described_b} "
                f"matches={self.matches} filtered={self.filtered} "
                f"inliers={self.inliers} mean_residual={self.mean_residual:.6f} H=[{h}]")


@dataclass
class RegistrationResult:
    image: ImageF
    mask: np.ndarray
    homography: Homography
    diagnostics: RegistrationDiagnostics


def register_pair(rgb: ImageF, rgnir: ImageF,
                  params: RegistrationParams | None = None,
                  pair_id: str = "") -> RegistrationResult:
    """Align an RGB image onto its paired R-G-NIR image."""
    if params is None:
        params = RegistrationParams()
    for img, name, band in ((rgb, "rgb", "G"), (rgnir, "rgnir", "G")):
        if not img.has_band(band):
            raise RegistrationError("detect", f"{name} image has no {band} band")

    gray_a = rgb.band("G").astype(np.float64)
    gray_b = rgnir.band("G").astype(np.float64)

    kps_a = detect_keypoints(gray_a, params.target_count)
    kps_b = detect_keypoints(gray_b, params.target_count)
    n_detected_a, n_detected_b = len(kps_a), len(kps_b)
    descs_a, kept_a = compute_descriptors(gray_a, kps_a)
    descs_b, kept_b = compute_descriptors(gray_b, kps_b)
    kps_a = [kps_a[i] for i in kept_a]
    kps_b = [kps_b[i] for i in kept_b]

    matches = match_bruteforce(descs_a, descs_b)
    filtered = filter_matches(matches, params.drop_fraction, params.drop_best)
    result: RansacResult = estimate_homography(filtered, kps_a, kps_b, params.ransac)

    try:
        warped, mask = warp_perspective(rgb, result.homography, rgnir.width, rgnir.height)
    except ImageFormatError as exc:
        raise RegistrationError("warp", str(exc)) from exc

    diag = RegistrationDiagnostics(
        pair_id=pair_id,
        keypoints_a=n_detected_a,
        keypoints_b=n_detected_b,
        described_a=len(kept_a),
        described_b=len(kept_b),
        matches=len(matches),
        filtered=len(filtered),
        inliers=len(result.inliers),
        mean_residual=result.mean_residual,
        homography=[float(v) for v in result.homography.matrix.ravel()],
    )
    return RegistrationResult(image=warped, mask=mask,
                              homography=result.homography, diagnostics=diag)
