"""RGB-mean baseline: the per-image average intensity a human analyst reads off.

Means are reported on the 8-bit scale at two precisions: full float64
precision, and `display_mean`, the gray mean rounded to 3 decimal places the
way image tools print it. Single-pixel changes in a multi-megapixel image
move the full-precision mean by ~1e-5 units, far below the display quantum,
which is exactly why this baseline detector fails where the map-based
quantization error does not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import Raster

__all__ = ["BaselineRecord", "rgb_mean", "DISPLAY_DECIMALS"]

DISPLAY_DECIMALS = 3


@dataclass(frozen=True)
class BaselineRecord:
    image_id: str
    mean_r: float
    mean_g: float
    mean_b: float
    mean_gray: float
    display_mean: float


def rgb_mean(image: Raster, image_id: str = "") -> BaselineRecord:
    """Per-channel arithmetic means on the 8-bit scale, plus the gray mean.

    display_mean is round(mean_gray * 1000) / 1000 (half-even ties).
    """
    if image.n_pixels < 1:
        raise ValueError("image is empty")
    scaled = image.pixels * 255.0
    means = scaled.reshape(-1, 3).mean(axis=0)
    mean_gray = float((means[0] + means[1] + means[2]) / 3.0)
    quantum = 10**DISPLAY_DECIMALS
    display = round(mean_gray * quantum) / quantum
    return BaselineRecord(
        image_id=image_id,
        mean_r=float(means[0]),
        mean_g=float(means[1]),
        mean_b=float(means[2]),
        mean_gray=mean_gray,
        display_mean=display,
    )
