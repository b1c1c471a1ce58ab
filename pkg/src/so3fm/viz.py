"""Color-coded sphere images of the per-axis marginals of a matrix Fisher
distribution, written as binary PPM, plus matplotlib summary figures.

For an axis ``a`` and a direction ``d`` on S^2, the marginal density of the
column ``R e_a`` at ``d`` is the average of the pdf over the circle of
rotations ``R_d Rz_a(theta)`` whose ``a``-th column is ``d``.  Images are
equirectangular (longitude across, latitude down) and report density with
respect to solid angle, so a uniform marginal is ``1 / (4 pi)``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .fisher import _as_params
from .so3 import axis_angle_rotation

AXES = "xyz"


def _jet_table() -> np.ndarray:
    # piecewise-linear knots of the classic jet map
    knots = {
        "r": [(0.0, 0.0), (0.35, 0.0), (0.66, 1.0), (0.89, 1.0), (1.0, 0.5)],
        "g": [(0.0, 0.0), (0.125, 0.0), (0.375, 1.0), (0.64, 1.0), (0.91, 0.0), (1.0, 0.0)],
        "b": [(0.0, 0.5), (0.11, 1.0), (0.34, 1.0), (0.65, 0.0), (1.0, 0.0)],
    }
    t = np.linspace(0.0, 1.0, 256)
    chans = [np.interp(t, *zip(*knots[c])) for c in "rgb"]
    return np.round(255 * np.stack(chans, axis=-1)).astype(np.uint8)


JET = _jet_table()
JET.setflags(write=False)


def worker_count() -> int:
    """Worker cap from ``SO3FM_THREADS`` (default: all cores)."""
    env = os.environ.get("SO3FM_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("SO3FM_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass
class SpherePdfImage:
    axis: int
    width: int
    height: int
    density: np.ndarray  # (height, width), per steradian
    pixels: np.ndarray  # (height, width, 3) uint8

    def solid_angles(self) -> np.ndarray:
        lat = _latitudes(self.height)
        dA = (2 * np.pi / self.width) * (np.pi / self.height) * np.cos(lat)
        return np.broadcast_to(dA[:, None], (self.height, self.width))

    def total_mass(self) -> float:
        return float(np.sum(self.density * self.solid_angles()))

    def ppm_bytes(self) -> bytes:
        header = f"P6\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + np.ascontiguousarray(self.pixels, dtype=np.uint8).tobytes()

    def save_ppm(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.ppm_bytes())
        return path


def read_ppm(path):
    """Minimal P6 reader, the inverse of :meth:`SpherePdfImage.save_ppm`."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6" or int(parts[3]) != 255:
        raise ValueError("not an 8-bit P6 file")
    w, h = int(parts[1]), int(parts[2])
    body = parts[4]
    if len(body) != w * h * 3:
        raise ValueError("truncated PPM body")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)


def _latitudes(height):
    return np.pi / 2 - (np.arange(height) + 0.5) * np.pi / height


def _longitudes(width):
    return -np.pi + (np.arange(width) + 0.5) * 2 * np.pi / width


def _frames(d, axis):
    """Rotations with column ``axis`` equal to ``d``."""
    east = np.stack([-d[..., 1], d[..., 0], np.zeros(d.shape[:-1])], axis=-1)
    n = np.linalg.norm(east, axis=-1, keepdims=True)
    # at the poles any tangent works
    east = np.where(n > 1e-12, east / np.maximum(n, 1e-300), [1.0, 0.0, 0.0])
    north = np.cross(d, east)
    cols = [d, east, north]
    order = [cols[(k - axis) % 3] for k in range(3)]  # cyclic, keeps det = +1
    return np.stack(order, axis=-1)


def _row_density(A, log_f, lat, lons, axis, ring):
    d = np.stack([np.cos(lat) * np.cos(lons), np.cos(lat) * np.sin(lons),
                  np.full_like(lons, np.sin(lat))], axis=-1)
    R = _frames(d, axis)[:, None] @ ring[None]  # (W, ring, 3, 3)
    logp = np.einsum("ij,wkij->wk", A, R) - log_f
    return np.exp(logsumexp(logp, axis=1) - np.log(ring.shape[0])) / (4 * np.pi)


def render_axis_marginal(f, axis: int, width: int = 256, height: int = 128,
                         ring_samples: int = 64, workers: int | None = None) -> SpherePdfImage:
    """``axis`` is 0, 1 or 2 for the x, y, z columns of ``R``."""
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1 or 2")
    if width < 2 or height < 2 or ring_samples < 1:
        raise ValueError("width, height >= 2 and ring_samples >= 1 required")
    p = _as_params(f)
    if p.batch_shape:
        raise ValueError("render one distribution at a time")
    e = np.eye(3)[axis]
    thetas = 2 * np.pi * np.arange(ring_samples) / ring_samples
    ring = np.stack([axis_angle_rotation(e, t) for t in thetas])
    lats, lons = _latitudes(height), _longitudes(width)
    A, log_f = p.A, float(p.log_f)
    job = lambda lat: _row_density(A, log_f, lat, lons, axis, ring)  # noqa: E731
    workers = workers or worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(job, lats))
    else:
        rows = [job(lat) for lat in lats]
    density = np.stack(rows)
    return SpherePdfImage(axis, width, height, density, colorize(density))


def colorize(density) -> np.ndarray:
    """Normalize by the image maximum and look up the jet table."""
    v = density / density.max()
    idx = np.clip(np.round(v * 255), 0, 255).astype(np.intp)
    return JET[idx]


def render_all(f, **kw) -> list[SpherePdfImage]:
    return [render_axis_marginal(f, a, **kw) for a in range(3)]


def write_ppms(images, prefix) -> list[Path]:
    return [img.save_ppm(f"{prefix}_{AXES[img.axis]}.ppm") for img in images]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_marginals(images, path, title=None) -> Path:
    plt = _pyplot()
    fig, axes = plt.subplots(1, len(images), figsize=(4 * len(images), 2.9))
    for ax, img in zip(np.atleast_1d(axes), images):
        ax.imshow(img.pixels, extent=(-180, 180, -90, 90))
        ax.set_title(f"{AXES[img.axis]}-axis marginal")
        ax.set_xlabel("longitude (deg)")
        ax.set_ylabel("latitude (deg)")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def plot_history(history: list[dict], path) -> Path:
    """Test error, pseudo-label error and coverage against SSL step."""
    plt = _pyplot()
    step = [h["step"] for h in history]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.2))
    a1.plot(step, [h["mean_err"] for h in history], label="test mean error")
    a1.plot(step, [h["pl_err"] for h in history], label="pseudo-label error")
    a1.set_xlabel("step")
    a1.set_ylabel("degrees")
    a1.legend()
    a2.plot(step, [h["coverage"] for h in history])
    a2.set_xlabel("step")
    a2.set_ylabel("pseudo-label coverage")
    a2.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
