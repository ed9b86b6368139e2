"""Toy data generators and named presets.

Desk-scale stand-ins: 2-D Gaussian mixtures for adversarial training
runs and 3-class isotropic blobs for the downstream classifier. Class
imbalance presets scale the reference three-class X-ray corpus counts
(150/232/238 and 223/421/306) down by ten; synthetic-generation presets
keep the original per-class targets (500 and 800 per class).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import RngStream


@dataclass(frozen=True)
class BlobsSpec:
    """Isotropic Gaussian blob layout: one center per class."""

    centers: tuple[tuple[float, ...], ...]
    scale: float
    train_counts: tuple[int, ...]
    test_counts: tuple[int, ...]

    @property
    def num_classes(self) -> int:
        return len(self.centers)


def gaussian_mixture(
    rng: RngStream,
    n: int,
    means: np.ndarray,
    scale: float = 0.25,
) -> np.ndarray:
    """n samples from an equal-weight isotropic Gaussian mixture."""
    means = np.asarray(means, dtype=float)
    idx = rng.integers(0, means.shape[0], size=n)
    return means[idx] + scale * rng.standard_normal((n, means.shape[1]))


def ring_means(modes: int = 8, radius: float = 2.0) -> np.ndarray:
    """Mode centers evenly spaced on a circle."""
    angles = 2 * np.pi * np.arange(modes) / modes
    return np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)


def two_mode_line(separation: float = 4.0) -> np.ndarray:
    """Two 1-D modes at +-separation/2."""
    return np.array([[-separation / 2.0], [separation / 2.0]])


def four_point_support() -> np.ndarray:
    """The discrete 4-point 1-D target used for convergence checks."""
    return np.array([[-3.0], [-1.0], [1.0], [3.0]])


def discrete_target(rng: RngStream, n: int, support: np.ndarray) -> np.ndarray:
    """n samples drawn uniformly from a finite support (no jitter)."""
    support = np.asarray(support, dtype=float)
    return support[rng.integers(0, support.shape[0], size=n)]


def blobs(
    rng: RngStream, spec: BlobsSpec, counts: tuple[int, ...]
) -> tuple[np.ndarray, np.ndarray]:
    """Labeled blob samples with the given per-class counts."""
    samples, labels = [], []
    for label, (center, count) in enumerate(zip(spec.centers, counts)):
        pts = np.asarray(center) + spec.scale * rng.standard_normal(
            (count, len(center))
        )
        samples.append(pts)
        labels.append(np.full(count, label, dtype=int))
    order = rng.permutation(sum(counts))
    return np.vstack(samples)[order], np.concatenate(labels)[order]


_TRIANGLE = ((0.0, 2.0), (-2.0, -1.0), (2.0, -1.0))

# Named presets; class counts in the imbalanced variants follow the
# reference corpora scaled down by ten. Overlapping classes (scale 1.5)
# keep the imbalance costly, which is what augmentation must repair.
BLOBS_PRESETS: dict[str, BlobsSpec] = {
    "blobs3-balanced": BlobsSpec(_TRIANGLE, 1.0, (50, 50, 50), (100, 100, 100)),
    "blobs3-imbalanced": BlobsSpec(_TRIANGLE, 1.5, (15, 50, 50), (100, 100, 100)),
    "blobs3-darkcovid-scaled": BlobsSpec(_TRIANGLE, 1.5, (15, 23, 24), (100, 100, 100)),
    "blobs3-chestcovid-scaled": BlobsSpec(_TRIANGLE, 1.5, (22, 42, 31), (100, 100, 100)),
}

# Per-class synthetic generation targets from the reference corpora.
SYNTHETIC_COUNT_PRESETS: dict[str, dict[int, int]] = {
    "table-darkcovid": {0: 500, 1: 500, 2: 500},
    "table-chestcovid": {0: 800, 1: 800, 2: 800},
}

MIXTURE_PRESETS: dict[str, dict] = {
    "mixture2d-ring": {"means": "ring", "modes": 8, "radius": 2.0, "scale": 0.3},
    "mixture1d-pair": {"means": "line", "separation": 4.0, "scale": 0.3},
}


def mixture_means(preset: str) -> np.ndarray:
    cfg = MIXTURE_PRESETS[preset]
    if cfg["means"] == "ring":
        return ring_means(cfg["modes"], cfg["radius"])
    return two_mode_line(cfg["separation"])


def mixture_scale(preset: str) -> float:
    return float(MIXTURE_PRESETS[preset]["scale"])


def labeled_blobs(
    rng: RngStream, preset: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Train and held-out test splits for a named blob preset."""
    spec = BLOBS_PRESETS[preset]
    train_x, train_y = blobs(rng, spec, spec.train_counts)
    test_x, test_y = blobs(rng, spec, spec.test_counts)
    return train_x, train_y, test_x, test_y
