"""Per-class colour augmentation of palette RGB images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AugmentParams:
    sigma_additive: float = 0.1
    sigma_gain: float = 0.05
    sigma_multiplicative: float = 0.1
    p: float = 0.5


def augment(
    rgb: np.ndarray,
    seg_truth: np.ndarray,
    variable_classes,
    params: AugmentParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Randomly recolour the pixels of each variable class.

    rgb is [3, H, W] in [0, 1]; seg_truth is a one-hot [H, W, C] image. For
    every class in `variable_classes` three independent coin flips decide
    whether to apply a per-class colour offset, a per-pixel gain drawn around
    1, and a per-class relative colour scale. Draws happen for every class in
    order, so the random stream does not depend on which flips come up.
    """
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ValueError("rgb must be [3, H, W]")
    img = rgb.astype(np.float64, copy=True)
    labels = np.asarray(seg_truth).argmax(axis=-1)
    h, w = labels.shape
    touched = np.zeros((h, w), dtype=bool)
    for c in sorted(variable_classes):
        m = labels == c
        flips = rng.random(3) < params.p
        offset = rng.normal(0.0, params.sigma_additive, size=3) if params.sigma_additive > 0 else np.zeros(3)
        gain = rng.normal(1.0, params.sigma_gain, size=(h, w)) if params.sigma_gain > 0 else np.ones((h, w))
        scale = rng.normal(0.0, params.sigma_multiplicative, size=3) if params.sigma_multiplicative > 0 else np.zeros(3)
        if not m.any():
            continue
        touched |= m
        if flips[0]:
            img[:, m] += offset[:, None]
        if flips[1]:
            img[:, m] *= gain[m][None, :]
        if flips[2]:
            img[:, m] *= 1.0 + scale[:, None]
    out = rgb.copy()
    out[:, touched] = np.clip(img[:, touched], 0.0, 1.0).astype(rgb.dtype)
    return out
