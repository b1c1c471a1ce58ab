"""Brute-force Monte-Carlo and finite-difference oracles.

Every estimator averages over Haar-uniform rotations (or uniform points on
S^3) and never touches the Bessel quadrature or the Bingham conversion, so
agreement with the analytic routines is an independent check.  Samples are
drawn in fixed-size chunks, each from its own child of
``SeedSequence(seed)``; results are reproducible bit-for-bit given
``(seed, n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .so3 import quat_to_rot, sample_uniform_quat

CHUNK = 1 << 16
S_CAP = 5.0
MIN_SAMPLES = 10_000


class VarianceError(ValueError):
    """Concentration too high for a uniform-sampling estimator."""


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_samples: int

    def agrees(self, value: float, n_sigma: float = 3.0, rel: float = 0.0) -> bool:
        tol = max(n_sigma * self.std_error, rel * abs(value))
        return abs(self.mean - value) <= tol


def _check(A, n):
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3):
        raise ValueError("A must be 3x3")
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    s = np.linalg.svd(A, compute_uv=False)
    if s.max() > S_CAP:
        raise VarianceError(
            f"singular value {s.max():.3g} > {S_CAP}: uniform-sampling variance is too large"
        )
    return A


def _quats(n: int, seed: int) -> np.ndarray:
    children = np.random.SeedSequence(seed).spawn(math.ceil(n / CHUNK))
    parts = []
    left = n
    for child in children:
        m = min(CHUNK, left)
        parts.append(sample_uniform_quat(np.random.default_rng(child), m))
        left -= m
    return np.concatenate(parts)


def haar_rotations(n: int, seed: int) -> np.ndarray:
    return quat_to_rot(_quats(n, seed))


def _exponents(A_list, n, seed):
    R = haar_rotations(n, seed)
    return [np.einsum("ij,nij->n", A, R) for A in A_list], R


def _ce_estimate(tf: np.ndarray, tg: np.ndarray, log_mass: float = 0.0) -> McEstimate:
    """``-E_f[log g]`` from exponent samples under a uniform base measure of
    total mass ``exp(log_mass)``, with plug-in normalizers."""
    n = tf.size
    wf = np.exp(tf - tf.max())
    wg = np.exp(tg - tg.max())
    mf, mg = wf.mean(), wg.mean()
    log_fg = log_mass + tg.max() + math.log(mg)
    m1 = np.mean(wf * tg) / mf
    est = -(m1 - log_fg)
    # influence function of the ratio / log-mean estimator
    psi = -(wf * (tg - m1)) / mf + (wg - mg) / mg
    return McEstimate(float(est), float(psi.std(ddof=1) / math.sqrt(n)), n)


def mc_norm_const(A, n: int = 10**6, seed: int = 0) -> McEstimate:
    """``E_Haar[exp(tr(A^T R))]``, the normalizing constant."""
    A = _check(A, n)
    (t,), _ = _exponents([A], n, seed)
    w = np.exp(t)
    return McEstimate(float(w.mean()), float(w.std(ddof=1) / math.sqrt(n)), n)


def mc_entropy(A, n: int = 10**6, seed: int = 0) -> McEstimate:
    A = _check(A, n)
    (t,), _ = _exponents([A], n, seed)
    return _ce_estimate(t, t)


def mc_cross_entropy(A_f, A_g, n: int = 10**6, seed: int = 0) -> McEstimate:
    """``-E_f[log g]`` with both normalizers estimated from shared samples."""
    A_f = _check(A_f, n)
    A_g = _check(A_g, n)
    (tf, tg), _ = _exponents([A_f, A_g], n, seed)
    return _ce_estimate(tf, tg)


def mc_expected_rotation(A, n: int = 10**6, seed: int = 0):
    """``E[R]`` and its entrywise standard error."""
    A = _check(A, n)
    (t,), R = _exponents([A], n, seed)
    w = np.exp(t - t.max())
    mw = w.mean()
    mean = np.einsum("n,nij->ij", w, R) / (n * mw)
    dev = w[:, None, None] * (R - mean)
    se = dev.std(axis=0, ddof=1) / (mw * math.sqrt(n))
    return mean, se


def mc_bingham_cross_entropy(C_f, C_g, n: int = 10**6, seed: int = 0) -> McEstimate:
    """``-E_f[log g]`` on S^3 for exponent matrices ``C = M Z M^T``
    (densities w.r.t. surface measure of mass ``2 pi^2``)."""
    C_f = np.asarray(C_f, dtype=float)
    C_g = np.asarray(C_g, dtype=float)
    for C in (C_f, C_g):
        if np.ptp(np.linalg.eigvalsh(C)) > 4 * S_CAP:
            raise VarianceError("Bingham concentration too large for uniform sampling")
    q = _quats(n, seed)
    tf = np.einsum("ni,ij,nj->n", q, C_f, q)
    tg = np.einsum("ni,ij,nj->n", q, C_g, q)
    return _ce_estimate(tf, tg, log_mass=math.log(2 * math.pi**2))


def mc_bingham_entropy(C, n: int = 10**6, seed: int = 0) -> McEstimate:
    return mc_bingham_cross_entropy(C, C, n, seed)


def fd_gradient(fn, A, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    A = np.array(A, dtype=float)
    grad = np.empty_like(A)
    for idx in np.ndindex(A.shape):
        old = A[idx]
        A[idx] = old + h
        fp = fn(A.copy())
        A[idx] = old - h
        fm = fn(A.copy())
        A[idx] = old
        fp, fm = float(np.sum(fp)), float(np.sum(fm))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite evaluation at index {idx}")
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def rel_err(analytic, reference, floor: float = 1e-3) -> float:
    """Largest entrywise ``|a - r| / max(|r|, floor)``."""
    a = np.asarray(analytic, dtype=float)
    r = np.asarray(reference, dtype=float)
    return float(np.max(np.abs(a - r) / np.maximum(np.abs(r), floor)))
