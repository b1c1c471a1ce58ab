"""Losses between rotations and matrix Fisher predictions, entropy gating,
and the combined labeled + unlabeled objective.

All gradients are with respect to the *student's* ``A``; teacher parameters
are constants.  Every function accepts batched :class:`FisherParams` and
returns per-sample values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bingham import LOG_2PI2, bingham_cross_entropy, fisher_to_bingham
from .fisher import FisherParams, entropy, expected_rotation, mode


@dataclass(frozen=True)
class LossValue:
    value: np.ndarray
    grad_A: np.ndarray


@dataclass(frozen=True)
class FilterDecision:
    entropy: np.ndarray
    tau: float
    passed: np.ndarray


def _trace_inner(a, b):
    return np.einsum("...ij,...ij->...", a, b)


def nll_supervised(pred: FisherParams, y) -> LossValue:
    """``-log p(y)``: ``log F(A) - tr(A^T y)``."""
    y = np.asarray(y, dtype=float)
    value = pred.log_f - _trace_inner(pred.A, y)
    return LossValue(value, expected_rotation(pred) - y)


def cross_entropy_erform(teacher: FisherParams, student: FisherParams) -> LossValue:
    """``H(t, s) = log F_s - tr(A_s^T E_t[R])``."""
    e_t = expected_rotation(teacher)
    value = student.log_f - _trace_inner(student.A, e_t)
    return LossValue(value, expected_rotation(student) - e_t)


def cross_entropy_qform(teacher: FisherParams, student: FisherParams) -> LossValue:
    """Cross-entropy through the equivalent Bingham pair (quaternion form)."""
    value = (
        bingham_cross_entropy(fisher_to_bingham(teacher), fisher_to_bingham(student))
        - LOG_2PI2
    )
    return LossValue(value, expected_rotation(student) - expected_rotation(teacher))


def nll_unsupervised(teacher: FisherParams, student: FisherParams) -> LossValue:
    """NLL of the teacher's mode under the student."""
    return nll_supervised(student, mode(teacher))


def entropy_filter(teacher: FisherParams, tau: float) -> FilterDecision:
    h = entropy(teacher)
    return FilterDecision(entropy=h, tau=tau, passed=h <= tau)


UNSUPERVISED_LOSSES = {
    "ce": cross_entropy_erform,
    "ce_qform": cross_entropy_qform,
    "nll": nll_unsupervised,
}


@dataclass(frozen=True)
class TotalLoss:
    value: float
    labeled: float
    unlabeled: float
    grad_labeled: np.ndarray | None
    grad_unlabeled: np.ndarray | None
    decision: FilterDecision | None
    unlabeled_values: np.ndarray | None


def total_loss(
    labeled=None,
    unlabeled=None,
    tau: float = -5.3,
    lambda_u: float = 1.0,
    kind: str = "ce",
    denominator: str = "batch",
) -> TotalLoss:
    """``mean(L_l) + lambda_u * sum(gate * L_u) / B_u``.

    ``labeled`` is ``(pred, y)`` and ``unlabeled`` is ``(teacher, student)``;
    either may be ``None``.  Gated-out samples contribute neither loss nor
    gradient.  With ``denominator="passed"`` the unlabeled sum is divided by
    the number of passing samples instead of the batch size.
    """
    if kind not in UNSUPERVISED_LOSSES:
        raise ValueError(f"unknown unsupervised loss {kind!r}")
    lab_value = 0.0
    grad_l = None
    if labeled is not None and len(labeled[0]) > 0:
        pred, y = labeled
        sup = nll_supervised(pred, y)
        n_l = len(pred)
        lab_value = float(np.mean(sup.value))
        grad_l = sup.grad_A / n_l

    unl_value = 0.0
    grad_u = None
    decision = None
    per_sample = None
    if unlabeled is not None:
        teacher, student = unlabeled
        decision = entropy_filter(teacher, tau)
        gate = decision.passed
        n_u = len(student)
        if denominator == "batch":
            denom = n_u
        elif denominator == "passed":
            denom = max(int(gate.sum()), 1)
        else:
            raise ValueError(f"unknown denominator {denominator!r}")
        per_sample = np.zeros(n_u)
        grad_u = np.zeros((n_u, 3, 3))
        if np.any(gate):
            idx = np.flatnonzero(gate)
            loss = UNSUPERVISED_LOSSES[kind](teacher[idx], student[idx])
            per_sample[idx] = loss.value
            grad_u[idx] = lambda_u * loss.grad_A / denom
        unl_value = float(per_sample.sum() / denom)

    return TotalLoss(
        value=lab_value + lambda_u * unl_value,
        labeled=lab_value,
        unlabeled=unl_value,
        grad_labeled=grad_l,
        grad_unlabeled=grad_u,
        decision=decision,
        unlabeled_values=per_sample,
    )
