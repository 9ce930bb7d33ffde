"""Procedural 16x16 sprite dataset with known generative factors.

Every combination of shape (3), scale (3), x position (8) and y position (8)
is rasterised once, giving 576 images. Pixel intensities are the fraction of
a 4x4 supersampling grid covered by the shape.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DomainError

SIZE = 16
SHAPES = ("square", "ellipse", "triangle")
SCALES = (2.0, 2.75, 3.5)
POSITIONS = tuple(np.linspace(3.5, SIZE - 3.5, 8))
FACTOR_NAMES = ("shape", "scale", "x", "y")
N_FACTORIAL = len(SHAPES) * len(SCALES) * len(POSITIONS) ** 2
_SUPERSAMPLE = 4


@dataclass(frozen=True)
class ToyDataset:
    images: np.ndarray
    factors: np.ndarray
    labels: np.ndarray
    label_factor: str = "shape"

    @property
    def n(self) -> int:
        return self.images.shape[0]


def _subpixel_grid():
    offsets = (np.arange(_SUPERSAMPLE) + 0.5) / _SUPERSAMPLE
    coords = (np.arange(SIZE)[:, None] + offsets[None, :]).ravel()
    return np.meshgrid(coords, coords, indexing="xy")


def rasterise(shape: str, scale: float, cx: float, cy: float) -> np.ndarray:
    """Render one sprite as a flat vector of H*W coverage values in [0, 1]."""
    xs, ys = _subpixel_grid()
    dx, dy = xs - cx, ys - cy
    if shape == "square":
        inside = (np.abs(dx) <= scale) & (np.abs(dy) <= scale)
    elif shape == "ellipse":
        inside = (dx / scale) ** 2 + (dy / (0.6 * scale)) ** 2 <= 1.0
    elif shape == "triangle":
        # apex at the top, base at the bottom (image rows grow downwards)
        inside = (dy >= -scale) & (dy <= scale) & (np.abs(dx) <= (dy + scale) / 2.0)
    else:
        raise DomainError(f"unknown shape {shape!r}")
    cover = inside.reshape(SIZE, _SUPERSAMPLE, SIZE, _SUPERSAMPLE).mean(axis=(1, 3))
    return cover.ravel()


def make_toy_dataset(seed: int = 0, subsample: Optional[int] = None, label_factor: str = "shape") -> ToyDataset:
    if label_factor not in FACTOR_NAMES:
        raise DomainError(f"unknown factor {label_factor!r}")
    combos = list(itertools.product(range(len(SHAPES)), range(len(SCALES)), range(len(POSITIONS)), range(len(POSITIONS))))
    factors = np.array(combos, dtype=np.int64)
    if subsample is not None:
        if not (1 <= subsample <= N_FACTORIAL):
            raise DomainError(f"subsample must lie in [1, {N_FACTORIAL}]")
        keep = np.sort(np.random.default_rng(seed).choice(N_FACTORIAL, size=subsample, replace=False))
        factors = factors[keep]
    images = np.stack(
        [rasterise(SHAPES[s], SCALES[k], POSITIONS[x], POSITIONS[y]) for s, k, x, y in factors]
    )
    images.flags.writeable = False
    factors.flags.writeable = False
    labels = factors[:, FACTOR_NAMES.index(label_factor)].copy()
    labels.flags.writeable = False
    return ToyDataset(images=images, factors=factors, labels=labels, label_factor=label_factor)
