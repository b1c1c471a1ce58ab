"""Bingham distribution on S^3 and its exact correspondence with the
matrix Fisher distribution.

``BinghamParams`` stores ``Z`` in the trace-zero convention.  Densities are
with respect to the (unnormalized) surface measure on S^3, whose total mass
is ``2 pi^2``; the uniform density is therefore ``1 / (2 pi^2)``.

No four-dimensional integral is ever evaluated: ``F_B = 2 pi^2 F_F`` and the
``z``-derivatives follow from the Fisher-side Bessel quadrature through the
linear ``z <-> s`` maps.
"""

from __future__ import annotations

import numpy as np

from .fisher import DEFAULT_QUADRATURE, FisherParams, QuadratureConfig, _integrate
from .so3 import QUAT_BASIS, rot_to_quat

LOG_2PI2 = float(np.log(2.0 * np.pi**2))

# dz/ds is linear: z_i = sum_j _Z_OF_S[i, j] s_j
_Z_OF_S = np.array(
    [[1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0], [1.0, 1.0, 1.0]]
)


class StructureError(ValueError):
    pass


def z_from_s(S) -> np.ndarray:
    """Trace-zero Bingham concentrations from proper singular values."""
    return np.asarray(S, dtype=float) @ _Z_OF_S.T


def s_from_z(Z) -> np.ndarray:
    """Inverse of :func:`z_from_s`; ``Z`` is centered first, so any
    constant shift of the four entries is ignored."""
    Z = np.asarray(Z, dtype=float)
    Z = Z - Z.mean(axis=-1, keepdims=True)
    z1, z2, z3 = Z[..., 0], Z[..., 1], Z[..., 2]
    return np.stack([-(z2 + z3), -(z1 + z3), -(z1 + z2)], axis=-1) / 2.0


def moments_from_dlogf(d) -> np.ndarray:
    """Second moments ``E[(m_i . q)^2]`` (equivalently ``dlog F_B/dz_i``)
    from the Fisher ratios ``(dF/ds)/F``.  They sum to one."""
    return 0.25 + 0.25 * (np.asarray(d, dtype=float) @ _Z_OF_S.T)


def quadratic_form(A) -> np.ndarray:
    """Symmetric trace-zero ``K`` with ``tr(A.T @ quat_to_rot(q)) = q @ K @ q``
    for every unit ``q``."""
    A = np.asarray(A, dtype=float)
    a = lambda i, j: A[..., i, j]  # noqa: E731
    K = np.empty(A.shape[:-2] + (4, 4))
    K[..., 0, 0] = a(0, 0) + a(1, 1) + a(2, 2)
    K[..., 1, 1] = a(0, 0) - a(1, 1) - a(2, 2)
    K[..., 2, 2] = -a(0, 0) + a(1, 1) - a(2, 2)
    K[..., 3, 3] = -a(0, 0) - a(1, 1) + a(2, 2)
    K[..., 0, 1] = K[..., 1, 0] = a(2, 1) - a(1, 2)
    K[..., 0, 2] = K[..., 2, 0] = a(0, 2) - a(2, 0)
    K[..., 0, 3] = K[..., 3, 0] = a(1, 0) - a(0, 1)
    K[..., 1, 2] = K[..., 2, 1] = a(0, 1) + a(1, 0)
    K[..., 1, 3] = K[..., 3, 1] = a(0, 2) + a(2, 0)
    K[..., 2, 3] = K[..., 3, 2] = a(1, 2) + a(2, 1)
    return K


def matrix_from_quadratic_form(K) -> np.ndarray:
    """Inverse of :func:`quadratic_form` on symmetric trace-zero matrices."""
    K = np.asarray(K, dtype=float)
    k = lambda i, j: K[..., i, j]  # noqa: E731
    A = np.empty(K.shape[:-2] + (3, 3))
    A[..., 0, 0] = (k(0, 0) + k(1, 1)) / 2
    A[..., 1, 1] = (k(0, 0) + k(2, 2)) / 2
    A[..., 2, 2] = (k(0, 0) + k(3, 3)) / 2
    A[..., 0, 1] = (k(1, 2) - k(0, 3)) / 2
    A[..., 1, 0] = (k(1, 2) + k(0, 3)) / 2
    A[..., 0, 2] = (k(1, 3) + k(0, 2)) / 2
    A[..., 2, 0] = (k(1, 3) - k(0, 2)) / 2
    A[..., 1, 2] = (k(2, 3) - k(0, 1)) / 2
    A[..., 2, 1] = (k(2, 3) + k(0, 1)) / 2
    return A


class BinghamParams:
    """Bingham parameters ``(M, Z)`` with cached log-normalizer and moments.

    ``Z`` is centered to trace zero on construction.  ``log_f`` is
    ``log F_B`` and ``moments[i]`` is ``E[(m_i . q)^2]``.
    """

    __slots__ = ("M", "Z", "log_f", "moments", "cfg")

    def __init__(self, M, Z, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
        M = np.array(M, dtype=float)
        Z = np.array(Z, dtype=float)
        if M.shape[-2:] != (4, 4) or Z.shape[-1] != 4:
            raise StructureError("M must be (..., 4, 4) and Z (..., 4)")
        gram = np.swapaxes(M, -1, -2) @ M
        if np.any(np.abs(gram - np.eye(4)) > 1e-8):
            raise StructureError("M must have orthonormal columns")
        Z = Z - Z.mean(axis=-1, keepdims=True)
        log_f, d = _integrate(s_from_z(Z), cfg)
        for arr in (M, Z):
            arr.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "log_f", log_f + LOG_2PI2)
        object.__setattr__(self, "moments", moments_from_dlogf(d))
        object.__setattr__(self, "cfg", cfg)

    def __setattr__(self, name, value):
        raise AttributeError("BinghamParams is immutable")

    @property
    def mode(self) -> np.ndarray:
        """Column of ``M`` with the largest concentration."""
        idx = np.argmax(self.Z, axis=-1)
        return np.take_along_axis(self.M, idx[..., None, None], axis=-1)[..., 0]

    def main_convention(self):
        """``(M, z)`` with columns sorted by decreasing concentration and
        ``z = (0, z1, z2, z3)``, ``0 >= z1 >= z2 >= z3``."""
        order = np.argsort(-self.Z, axis=-1, kind="stable")
        M = np.take_along_axis(self.M, order[..., None, :], axis=-1)
        z = np.take_along_axis(self.Z, order, axis=-1)
        return M, z - z[..., :1]

    def __repr__(self):
        return f"BinghamParams(Z={np.array2string(self.Z, precision=4)}, log_f={self.log_f})"


def fisher_to_bingham(f: FisherParams) -> BinghamParams:
    """Columns ``m_i`` are the quaternions of ``U E_i V^T``; ``Z`` follows
    from the proper singular values."""
    U, S, V = f.svd.U, f.svd.S, f.svd.V
    Vt = np.swapaxes(V, -1, -2)
    R = U[..., None, :, :] @ QUAT_BASIS @ Vt[..., None, :, :]
    M = np.swapaxes(rot_to_quat(R), -1, -2)
    # orient into SO(4); the sign of a column never changes M Z M^T
    flip = np.where(np.linalg.det(M) < 0, -1.0, 1.0)
    M = M.copy()
    M[..., :, 0] *= flip[..., None]
    return BinghamParams(M, z_from_s(S), f.cfg)


def bingham_to_fisher(b: BinghamParams) -> FisherParams:
    """Recover ``A`` from the quadratic form ``M Z M^T``.

    Every trace-zero symmetric 4x4 matrix is the quadratic form of exactly
    one ``A``, so only a malformed ``M`` is rejected (at construction of
    ``b``).
    """
    C = (b.M * b.Z[..., None, :]) @ np.swapaxes(b.M, -1, -2)
    return FisherParams(matrix_from_quadratic_form(C), b.cfg)


def bingham_log_pdf(b: BinghamParams, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    proj = np.einsum("...i,...ij->...j", q, b.M)
    return np.sum(b.Z * proj**2, axis=-1) - b.log_f


def bingham_entropy(b: BinghamParams) -> np.ndarray:
    """``log F - sum_i z_i (dF/dz_i)/F``."""
    return b.log_f - np.sum(b.Z * b.moments, axis=-1)


def bingham_entropy_from_fisher(f: FisherParams) -> np.ndarray:
    """Bingham entropy of the distribution equivalent to ``f``; needs only
    ``f``'s singular values, no quaternion conversion."""
    Z = z_from_s(f.S)
    E = moments_from_dlogf(f.dlogf)
    return LOG_2PI2 + f.log_f - np.sum(Z * E, axis=-1)


def bingham_cross_entropy(f: BinghamParams, g: BinghamParams) -> np.ndarray:
    """``-E_f[log g]``.

    ``a[j, i] = m_fj . m_gi`` and ``b[i] = mu_f . m_gi`` with ``mu_f`` the
    mode of ``f``; then ``E_f[(m_gi . q)^2] = b_i^2 + sum_j (a_ji^2 - b_i^2) E_fj``.
    """
    a = np.swapaxes(f.M, -1, -2) @ g.M
    b = np.einsum("...k,...ki->...i", f.mode, g.M)
    E = f.moments
    proj = b**2 + np.einsum("...ji,...j->...i", a**2 - b[..., None, :] ** 2, E)
    return g.log_f - np.sum(g.Z * proj, axis=-1)


def birdal_matrix(o1) -> np.ndarray:
    """Orthogonal 4x4 matrix built from a normalized 4-vector."""
    o1 = np.asarray(o1, dtype=float)
    n = np.linalg.norm(o1, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise StructureError("o1 must be nonzero")
    a, b, c, d = np.moveaxis(o1 / n, -1, 0)
    rows = [
        [a, -b, -c, d],
        [b, a, d, c],
        [c, -d, a, -b],
        [d, c, -b, -a],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, x)


def birdal_z(o2) -> np.ndarray:
    """Main-convention concentrations ``(0, z1, z2, z3)`` from raw outputs
    via cumulative negative softplus."""
    o2 = np.asarray(o2, dtype=float)
    z = -np.cumsum(softplus(o2), axis=-1)
    return np.concatenate([np.zeros(o2.shape[:-1] + (1,)), z], axis=-1)


def birdal_construct(o1, o2, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> BinghamParams:
    return BinghamParams(birdal_matrix(o1), birdal_z(o2), cfg)


def bingham_from_quaternion_form(K, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> BinghamParams:
    """Eigen-decompose a symmetric 4x4 exponent matrix."""
    w, M = np.linalg.eigh(np.asarray(K, dtype=float))
    return BinghamParams(M, w, cfg)

