"""Small tanh MLP with hand-written reverse mode, plus the two output heads
that turn raw network outputs into a matrix Fisher parameter ``A``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bingham import BinghamParams, birdal_matrix, birdal_z, matrix_from_quadratic_form
from .fisher import DEFAULT_QUADRATURE, FisherParams, QuadratureConfig


class Regressor:
    """``in -> hidden -> hidden -> out`` with tanh between layers."""

    def __init__(self, params: list[np.ndarray]):
        if len(params) != 6:
            raise ValueError("expected 3 weight/bias pairs")
        self.params = params

    @classmethod
    def init(cls, n_in: int, hidden: int, n_out: int, rng: np.random.Generator,
             out_scale: float = 0.1) -> "Regressor":
        sizes = [n_in, hidden, hidden, n_out]
        params = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = 1.0 / np.sqrt(a)
            if i == 2:
                scale *= out_scale
            params.append(scale * rng.standard_normal((a, b)))
            params.append(np.zeros(b))
        return cls(params)

    @property
    def shapes(self):
        return [p.shape for p in self.params]

    @property
    def n_in(self) -> int:
        return self.params[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.params[-1].shape[0]

    def copy(self) -> "Regressor":
        return Regressor([p.copy() for p in self.params])

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        off = 0
        for p in self.params:
            p[...] = vec[off:off + p.size].reshape(p.shape)
            off += p.size
        if off != vec.size:
            raise ValueError("flat vector has the wrong length")

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected {self.n_in} input features, got {x.shape[-1]}")
        W1, b1, W2, b2, W3, b3 = self.params
        h1 = np.tanh(x @ W1 + b1)
        h2 = np.tanh(h1 @ W2 + b2)
        out = h2 @ W3 + b3
        return out, (x, h1, h2)

    def backward(self, cache, grad_out) -> list[np.ndarray]:
        x, h1, h2 = cache
        W1, b1, W2, b2, W3, b3 = self.params
        grad_out = np.asarray(grad_out, dtype=float)
        if grad_out.shape != (x.shape[0], self.n_out):
            raise ValueError("upstream gradient does not match the batch output")
        gW3 = h2.T @ grad_out
        gb3 = grad_out.sum(axis=0)
        d2 = (grad_out @ W3.T) * (1.0 - h2**2)
        gW2 = h1.T @ d2
        gb2 = d2.sum(axis=0)
        d1 = (d2 @ W2.T) * (1.0 - h1**2)
        gW1 = x.T @ d1
        gb1 = d1.sum(axis=0)
        return [gW1, gb1, gW2, gb2, gW3, gb3]

    def save(self, path) -> None:
        """Raw little-endian float64 parameters plus a JSON shape manifest
        at ``<path>.json``."""
        path = Path(path)
        self.flat().astype("<f8").tofile(path)
        manifest = {"dtype": "<f8", "shapes": [list(s) for s in self.shapes],
                    "activation": "tanh"}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(manifest, indent=2))

    @classmethod
    def load(cls, path) -> "Regressor":
        path = Path(path)
        manifest = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        vec = np.fromfile(path, dtype=manifest["dtype"]).astype(float)
        params, off = [], 0
        for shape in manifest["shapes"]:
            size = int(np.prod(shape))
            params.append(vec[off:off + size].reshape(shape))
            off += size
        if off != vec.size:
            raise ValueError("model file does not match its manifest")
        return cls(params)


def ema_update(teacher: Regressor, student: Regressor, decay: float) -> None:
    """In place: ``teacher <- decay * teacher + (1 - decay) * student``."""
    if teacher.shapes != student.shapes:
        raise ValueError("teacher and student shapes differ")
    for t, s in zip(teacher.params, student.params):
        t *= decay
        t += (1.0 - decay) * s


class FisherHead:
    """Nine raw outputs reshaped row-major into ``A``."""

    n_out = 9

    @staticmethod
    def to_A(raw):
        return np.asarray(raw).reshape(-1, 3, 3)

    @staticmethod
    def backward(raw, grad_A):
        return np.asarray(grad_A).reshape(len(raw), 9)


def _linear_basis(fn, n_in: int, shape_in) -> np.ndarray:
    cols = []
    for k in range(n_in):
        e = np.zeros(n_in)
        e[k] = 1.0
        cols.append(np.asarray(fn(e.reshape(shape_in)), dtype=float).ravel())
    return np.stack(cols, axis=1)


# d vec(A) / d vec(C) for A = matrix_from_quadratic_form(C); exact, it is linear
_KINV_JAC = _linear_basis(matrix_from_quadratic_form, 16, (4, 4))
# birdal_matrix(n) = sum_k n_k _BIRDAL_BASIS[k] for unit n
_BIRDAL_BASIS = np.stack([birdal_matrix(np.eye(4)[k]) for k in range(4)])


class BinghamHead:
    """Seven raw outputs ``(o1, o2)``: ``M`` from the normalized ``o1`` via
    :func:`~so3fm.bingham.birdal_matrix`, ``Z`` from cumulative softplus of
    ``o2``.  ``A`` is the matrix Fisher parameter with the same density."""

    n_out = 7

    @staticmethod
    def exponent(raw):
        raw = np.asarray(raw, dtype=float).reshape(-1, 7)
        M = birdal_matrix(raw[:, :4])
        Z = birdal_z(raw[:, 4:])
        Zc = Z - Z.mean(axis=-1, keepdims=True)
        C = (M * Zc[:, None, :]) @ np.swapaxes(M, -1, -2)
        return M, Zc, C

    @classmethod
    def to_A(cls, raw):
        return matrix_from_quadratic_form(cls.exponent(raw)[2])

    @classmethod
    def to_bingham(cls, raw, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> BinghamParams:
        M, Zc, _ = cls.exponent(raw)
        return BinghamParams(M, Zc, cfg)

    @classmethod
    def backward(cls, raw, grad_A):
        raw = np.asarray(raw, dtype=float).reshape(-1, 7)
        M, Zc, _ = cls.exponent(raw)
        gC = (np.asarray(grad_A).reshape(-1, 9) @ _KINV_JAC).reshape(-1, 4, 4)
        gC = 0.5 * (gC + np.swapaxes(gC, -1, -2))
        gM = 2.0 * (gC @ M) * Zc[:, None, :]
        gZc = np.einsum("bki,bkl,bli->bi", M, gC, M)
        gZ = gZc - gZc.mean(axis=-1, keepdims=True)
        # Z = (0, -p1, -p1-p2, -p1-p2-p3) with p = softplus(o2)
        gp = -np.stack([gZ[:, 1:].sum(-1), gZ[:, 2:].sum(-1), gZ[:, 3]], axis=-1)
        o2 = raw[:, 4:]
        g_o2 = gp / (1.0 + np.exp(-o2))
        o1 = raw[:, :4]
        norm = np.linalg.norm(o1, axis=-1, keepdims=True)
        n = o1 / norm
        gn = np.einsum("bij,kij->bk", gM, _BIRDAL_BASIS)
        g_o1 = (gn - n * np.sum(n * gn, axis=-1, keepdims=True)) / norm
        return np.concatenate([g_o1, g_o2], axis=-1)


HEADS = {"fisher": FisherHead, "bingham": BinghamHead}


def forward(reg: Regressor, features, head=FisherHead, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Network output as batched :class:`FisherParams` plus the backward cache."""
    raw, cache = reg.forward(features)
    return FisherParams(head.to_A(raw), cfg), (raw, cache)


def backward(reg: Regressor, cache, grad_A, head=FisherHead) -> list[np.ndarray]:
    raw, inner = cache
    return reg.backward(inner, head.backward(raw, grad_A))


def bingham_head_forward(reg: Regressor, features, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    if reg.n_out != 7:
        raise ValueError("the Bingham head needs a regressor with 7 outputs")
    raw, _ = reg.forward(features)
    return BinghamHead.to_bingham(raw, cfg)
