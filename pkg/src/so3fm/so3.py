"""Rotation-group primitives.

Rotations are plain ``(..., 3, 3)`` float arrays and unit quaternions are
``(..., 4)`` arrays ordered ``(w, x, y, z)``.  Every function broadcasts over
leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-6
UNIT_TOL = 1e-6
CANON_TOL = 1e-9


def quat_to_rot(q) -> np.ndarray:
    """Map unit quaternions ``(w, x, y, z)`` to rotation matrices.

    Inputs within ``1e-6`` of unit norm are renormalized; anything further
    off raises ``ValueError``.  ``quat_to_rot(q) == quat_to_rot(-q)``.
    """
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise ValueError(f"expected (..., 4) quaternions, got shape {q.shape}")
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(np.abs(norm - 1.0) > UNIT_TOL):
        raise ValueError("quaternion is not unit length")
    q = q / norm
    w, x, y, z = np.moveaxis(q, -1, 0)
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * y * y - 2 * z * z
    r[..., 0, 1] = 2 * x * y - 2 * w * z
    r[..., 0, 2] = 2 * x * z + 2 * w * y
    r[..., 1, 0] = 2 * x * y + 2 * w * z
    r[..., 1, 1] = 1 - 2 * x * x - 2 * z * z
    r[..., 1, 2] = 2 * y * z - 2 * w * x
    r[..., 2, 0] = 2 * x * z - 2 * w * y
    r[..., 2, 1] = 2 * y * z + 2 * w * x
    r[..., 2, 2] = 1 - 2 * x * x - 2 * y * y
    return r


def canonical_quat(q) -> np.ndarray:
    """Pick the hemisphere representative: ``w > 0``, or when ``|w|`` is
    below 1e-9 the first non-negligible of ``(x, y, z)`` positive."""
    q = np.array(q, dtype=float, copy=True)
    flat = q.reshape(-1, 4)
    lead = np.argmax(np.abs(flat) > CANON_TOL, axis=1)
    sign = np.where(flat[np.arange(len(flat)), lead] < 0, -1.0, 1.0)
    return (flat * sign[:, None]).reshape(q.shape)


def is_rotation(r, tol: float = ORTHO_TOL) -> bool:
    r = np.asarray(r, dtype=float)
    if r.shape[-2:] != (3, 3):
        return False
    eye = np.eye(3)
    gram = np.swapaxes(r, -1, -2) @ r
    ok = np.all(np.linalg.norm(gram - eye, axis=(-2, -1)) < tol)
    return bool(ok and np.all(np.abs(np.linalg.det(r) - 1.0) < tol))


def rot_to_quat(r) -> np.ndarray:
    """Inverse of :func:`quat_to_rot`, returned in the ``w >= 0`` hemisphere.

    Uses the largest-diagonal branch selection so that half-turns
    (trace = -1) are handled without dividing by zero.
    """
    r = np.asarray(r, dtype=float)
    if not is_rotation(r):
        raise ValueError("input is not a rotation matrix")
    batch = r.shape[:-2]
    m = r.reshape(-1, 3, 3)
    out = np.empty((m.shape[0], 4))
    tr = np.trace(m, axis1=1, axis2=2)
    diag = np.diagonal(m, axis1=1, axis2=2)
    cand = np.concatenate([tr[:, None], diag], axis=1)
    branch = np.argmax(cand, axis=1)

    i = branch == 0
    s = np.sqrt(1.0 + tr[i]) * 2.0
    out[i, 0] = 0.25 * s
    out[i, 1] = (m[i, 2, 1] - m[i, 1, 2]) / s
    out[i, 2] = (m[i, 0, 2] - m[i, 2, 0]) / s
    out[i, 3] = (m[i, 1, 0] - m[i, 0, 1]) / s

    i = branch == 1
    s = np.sqrt(1.0 + m[i, 0, 0] - m[i, 1, 1] - m[i, 2, 2]) * 2.0
    out[i, 0] = (m[i, 2, 1] - m[i, 1, 2]) / s
    out[i, 1] = 0.25 * s
    out[i, 2] = (m[i, 0, 1] + m[i, 1, 0]) / s
    out[i, 3] = (m[i, 0, 2] + m[i, 2, 0]) / s

    i = branch == 2
    s = np.sqrt(1.0 + m[i, 1, 1] - m[i, 0, 0] - m[i, 2, 2]) * 2.0
    out[i, 0] = (m[i, 0, 2] - m[i, 2, 0]) / s
    out[i, 1] = (m[i, 0, 1] + m[i, 1, 0]) / s
    out[i, 2] = 0.25 * s
    out[i, 3] = (m[i, 1, 2] + m[i, 2, 1]) / s

    i = branch == 3
    s = np.sqrt(1.0 + m[i, 2, 2] - m[i, 0, 0] - m[i, 1, 1]) * 2.0
    out[i, 0] = (m[i, 1, 0] - m[i, 0, 1]) / s
    out[i, 1] = (m[i, 0, 2] + m[i, 2, 0]) / s
    out[i, 2] = (m[i, 1, 2] + m[i, 2, 1]) / s
    out[i, 3] = 0.25 * s

    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return canonical_quat(out).reshape(batch + (4,))


@dataclass(frozen=True)
class ProperSVD:
    """``a = U @ diag(S) @ V.T`` with ``U, V`` in SO(3) and
    ``s1 >= s2 >= |s3|`` (the sign defect lives in ``s3``)."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S[..., None, :]) @ np.swapaxes(self.V, -1, -2)


def proper_svd(a) -> ProperSVD:
    a = np.asarray(a, dtype=float)
    if a.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3) input, got {a.shape}")
    u1, s1, v1t = np.linalg.svd(a)
    v1 = np.swapaxes(v1t, -1, -2)
    du = np.sign(np.linalg.det(u1))
    dv = np.sign(np.linalg.det(v1))
    u = u1.copy()
    v = v1.copy()
    u[..., :, 2] *= du[..., None]
    v[..., :, 2] *= dv[..., None]
    s = s1.copy()
    s[..., 2] *= du * dv
    return ProperSVD(U=u, S=s, V=v)


def geodesic_angle(r1, r2) -> np.ndarray:
    """Angle of ``r1.T @ r2`` in degrees, in ``[0, 180]``."""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    tr = np.einsum("...ij,...ij->...", r1, r2)
    c = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    return np.degrees(np.arccos(c))


def sample_uniform_quat(rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniform points on S^3 from normalized Gaussian 4-vectors."""
    shape = () if size is None else tuple(np.atleast_1d(size))
    g = rng.standard_normal(shape + (4,))
    n = np.linalg.norm(g, axis=-1)
    bad = n < 1e-12
    while np.any(bad):
        g[bad] = rng.standard_normal((int(bad.sum()), 4))
        n = np.linalg.norm(g, axis=-1)
        bad = n < 1e-12
    return g / n[..., None]


def sample_uniform_rotation(rng: np.random.Generator, size=None) -> np.ndarray:
    """Haar-uniform rotations, via the image of uniform unit quaternions."""
    return quat_to_rot(sample_uniform_quat(rng, size))


def axis_angle_rotation(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return quat_to_rot(np.concatenate([[np.cos(half)], np.sin(half) * axis]))


def _quat_basis() -> np.ndarray:
    e = np.eye(4)
    # columns of I4 in (w, x, y, z) order are identity, then half-turns about
    # x, y, z; reorder so E1..E3 are the half-turns and E4 = I3
    return quat_to_rot(np.stack([e[1], e[2], e[3], e[0]]))


#: ``E[i]`` for ``i = 0..3``: half-turns about x, y, z, then the identity.
QUAT_BASIS = _quat_basis()
#: unit quaternions mapping onto :data:`QUAT_BASIS`
QUAT_BASIS_Q = np.array([[0.0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0]])
