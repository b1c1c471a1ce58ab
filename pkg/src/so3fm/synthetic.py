"""Synthetic rotation-regression task.

A fixed keypoint template is rotated and orthographically projected onto
the image plane (the first two rows of ``R @ P``); the flattened projection
plus Gaussian noise is the feature vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .so3 import proper_svd, sample_uniform_rotation

# ordered so that any prefix of length >= 4 is non-coplanar
_CUBE = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
        [1, -1, 1],
        [1, 1, -1],
    ],
    dtype=float,
).T


def keypoint_template(K: int = 8) -> np.ndarray:
    """``3 x K`` template: cube corners, then fixed pseudo-random points."""
    if K < 4:
        raise ValueError("need at least 4 keypoints")
    if K <= 8:
        return _CUBE[:, :K].copy()
    extra = np.random.default_rng(12345).uniform(-1, 1, size=(3, K - 8))
    return np.concatenate([_CUBE, extra], axis=1)


def project(R, template) -> np.ndarray:
    """Flattened first two rows of ``R @ template`` (x coords then y)."""
    pts = np.asarray(R) @ template
    return pts[..., :2, :].reshape(pts.shape[:-2] + (-1,))


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    template: np.ndarray

    def __len__(self):
        return len(self.features)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.template)


def gen_synthetic_dataset(n: int, K: int = 8, sigma: float = 0.0, seed: int = 0) -> Dataset:
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    template = keypoint_template(K)
    R = sample_uniform_rotation(rng, n)
    x = project(R, template)
    if sigma > 0:
        x = x + sigma * rng.standard_normal(x.shape)
    return Dataset(x, R, template)


def decode_pose(features, template) -> np.ndarray:
    """Least-squares orthographic pose: solve the first two rows linearly,
    complete with their cross product, project onto SO(3)."""
    features = np.asarray(features, dtype=float)
    K = template.shape[1]
    obs = features.reshape(features.shape[:-1] + (2, K))
    rows = obs @ template.T @ np.linalg.inv(template @ template.T)
    r3 = np.cross(rows[..., 0, :], rows[..., 1, :])
    M = np.concatenate([rows, r3[..., None, :]], axis=-2)
    svd = proper_svd(M)
    return svd.U @ np.swapaxes(svd.V, -1, -2)


def weak_augment(x, rng: np.random.Generator, sigma: float) -> np.ndarray:
    return x + sigma * rng.standard_normal(x.shape)


def strong_augment(x, rng: np.random.Generator, sigma: float, dropout: float) -> np.ndarray:
    noisy = x + sigma * rng.standard_normal(x.shape)
    keep = rng.random(x.shape) >= dropout
    return noisy * keep
