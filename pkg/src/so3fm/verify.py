"""Self-contained verification suite behind ``so3fm verify``.

Each check compares an analytic quantity against an independent reference
(Monte-Carlo over Haar samples, finite differences, a finer quadrature or an
algebraic identity) and yields one table row.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bingham import (
    LOG_2PI2,
    bingham_entropy,
    bingham_log_pdf,
    bingham_to_fisher,
    fisher_to_bingham,
    quadratic_form,
)
from .fisher import (
    FisherParams,
    QuadratureConfig,
    entropy,
    expected_rotation,
    grad_logF_wrt_A,
    log_norm_const,
    log_pdf,
    mode,
)
from .losses import cross_entropy_erform, cross_entropy_qform, nll_supervised
from .oracle import (
    fd_gradient,
    mc_bingham_entropy,
    mc_cross_entropy,
    mc_entropy,
    mc_expected_rotation,
    mc_norm_const,
    rel_err,
)
from .so3 import proper_svd, quat_to_rot, rot_to_quat, sample_uniform_quat, sample_uniform_rotation
from .viz import render_axis_marginal, worker_count


@dataclass
class Check:
    quantity: str
    analytic: float
    oracle: float
    sigma: float  # oracle standard error, nan for deterministic references
    passed: bool

    def row(self) -> str:
        sig = "-" if math.isnan(self.sigma) else f"{self.sigma:.3e}"
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.quantity:<34} {self.analytic:>14.6e} {self.oracle:>14.6e} {sig:>10} {verdict}"


HEADER = f"{'quantity':<34} {'analytic':>14} {'oracle':>14} {'sigma':>10} verdict"


def _random_A(rng, lo, hi):
    g, h = sample_uniform_rotation(rng, 2)
    return g @ np.diag(np.sort(rng.uniform(lo, hi, 3))[::-1]) @ h.T


def _mc_checks(seed: int, n: int):
    rng = np.random.default_rng([seed, 1])
    out = []
    mats = [("diag(5,5,5)", np.diag([5.0, 5, 5]))]
    mats += [(f"random#{i} s<=3", _random_A(rng, 0, 3)) for i in range(3)]
    for k, (name, A) in enumerate(mats):
        est = mc_norm_const(A, n=n, seed=seed + k)
        val = math.exp(float(log_norm_const(proper_svd(A).S)))
        out.append(Check(f"F {name}", val, est.mean, est.std_error,
                         est.agrees(val, 3, 0.01)))
        est = mc_entropy(A, n=n, seed=seed + 100 + k)
        val = float(entropy(A))
        out.append(Check(f"H {name}", val, est.mean, est.std_error, est.agrees(val, 4, 0.02)))
    for k in range(2):
        Af, Ag = _random_A(rng, 0, 3), _random_A(rng, 0, 3)
        est = mc_cross_entropy(Af, Ag, n=n, seed=seed + 200 + k)
        val = float(cross_entropy_erform(FisherParams(Af), FisherParams(Ag)).value)
        out.append(Check(f"CE random pair #{k}", val, est.mean, est.std_error, est.agrees(val, 4, 0.02)))
    A = _random_A(rng, 0, 3)
    mean, se = mc_expected_rotation(A, n=n, seed=seed + 300)
    er = expected_rotation(A)
    z = np.abs(er - mean) / np.maximum(se, 1e-300)
    i = np.unravel_index(np.argmax(z), z.shape)
    out.append(Check("E[R] worst entry", float(er[i]), float(mean[i]), float(se[i]), bool(z.max() <= 4)))
    b = fisher_to_bingham(FisherParams(A))
    C = (b.M * b.Z) @ b.M.T
    est = mc_bingham_entropy(C, n=n, seed=seed + 400)
    val = float(bingham_entropy(b))
    out.append(Check("Bingham H on S^3", val, est.mean, est.std_error, est.agrees(val, 4, 0.02)))
    return out


def _deterministic_checks(seed: int):
    rng = np.random.default_rng([seed, 2])
    nan = float("nan")
    out = []

    fine = QuadratureConfig(n_trapezoids=8191)
    S = rng.uniform(0, 50, size=(50, 3)) * [1, 1, 1]
    S[:, 2] *= rng.choice([-1, 1], size=50)
    a, r = log_norm_const(S), log_norm_const(S, fine)
    worst = int(np.argmax(np.abs(a - r) / np.abs(r)))
    out.append(Check("logF 511 vs 8191 (|s|<=50)", float(a[worst]), float(r[worst]), nan,
                     bool(np.all(np.abs(a - r) <= 1e-8 * np.abs(r)))))

    A = rng.normal(size=(1000, 3, 3)) * 5
    q = sample_uniform_quat(rng, 1000)
    lhs = np.einsum("nij,nij->n", A, quat_to_rot(q))
    rhs = np.einsum("ni,nij,nj->n", q, quadratic_form(A), q)
    k = int(np.argmax(np.abs(lhs - rhs)))
    out.append(Check("tr(A^T R) = q^T K q", float(lhs[k]), float(rhs[k]), nan,
                     bool(np.max(np.abs(lhs - rhs)) < 1e-9)))

    f = FisherParams(_random_A(rng, 0, 20))
    b = fisher_to_bingham(f)
    q = sample_uniform_quat(rng, 100)
    ratio = log_pdf(f, quat_to_rot(q)) - bingham_log_pdf(b, q)
    out.append(Check("log p_F - log p_B = log 2pi^2", float(ratio.mean()), LOG_2PI2, nan,
                     bool(np.max(np.abs(ratio - LOG_2PI2)) < 1e-9 * LOG_2PI2)))
    hb = float(bingham_entropy(b))
    out.append(Check("H_F = H_B - log 2pi^2", float(entropy(f)), hb - LOG_2PI2, nan,
                     abs(float(entropy(f)) - (hb - LOG_2PI2)) < 1e-9))
    back = bingham_to_fisher(b).A
    out.append(Check("Fisher->Bingham->Fisher |dA|", float(np.abs(back - f.A).max()), 0.0, nan,
                     bool(np.abs(back - f.A).max() < 1e-9)))

    worst_rel, pair = 0.0, None
    for _ in range(100):
        t, s = FisherParams(_random_A(rng, 0, 20)), FisherParams(_random_A(rng, 0, 20))
        e, qf = float(cross_entropy_erform(t, s).value), float(cross_entropy_qform(t, s).value)
        rel = abs(e - qf) / abs(qf)
        if rel >= worst_rel:
            worst_rel, pair = rel, (e, qf)
    out.append(Check("CE erform vs qform (worst of 100)", pair[0], pair[1], nan, worst_rel < 1e-6))

    gibbs_ok, self_gap = True, 0.0
    for _ in range(100):
        t, s = FisherParams(_random_A(rng, 0, 20)), FisherParams(_random_A(rng, 0, 20))
        gibbs_ok &= bool(cross_entropy_erform(t, s).value >= entropy(t) - 1e-12)
        self_gap = max(self_gap, abs(float(cross_entropy_erform(t, t).value - entropy(t))))
    out.append(Check("H(f,f) - H(f) (worst of 100)", self_gap, 0.0, nan, self_gap < 1e-9))
    out.append(Check("Gibbs H(f,g) >= H(f), 100 pairs", float(gibbs_ok), 1.0, nan, gibbs_ok))

    A = _random_A(rng, 1, 10) + np.diag([4.0, 2, 0])
    fn = lambda a: log_norm_const(proper_svd(a).S)  # noqa: E731
    g = grad_logF_wrt_A(A)
    out.append(Check("dlogF/dA vs FD (rel)", float(rel_err(g, fd_gradient(fn, A))), 0.0, nan,
                     rel_err(g, fd_gradient(fn, A)) < 1e-4))
    y = sample_uniform_rotation(rng)
    fn = lambda a: nll_supervised(FisherParams(a), y).value  # noqa: E731
    e = rel_err(nll_supervised(FisherParams(A), y).grad_A, fd_gradient(fn, A))
    out.append(Check("NLL gradient vs FD (rel)", e, 0.0, nan, e < 1e-4))
    t = FisherParams(_random_A(rng, 0, 20))
    fn = lambda a: cross_entropy_erform(t, FisherParams(a)).value  # noqa: E731
    e = rel_err(cross_entropy_erform(t, FisherParams(A)).grad_A, fd_gradient(fn, A))
    out.append(Check("CE gradient vs FD (rel)", e, 0.0, nan, e < 1e-4))

    big = QuadratureConfig(s_max=5000)
    r = sample_uniform_rotation(rng)
    s = FisherParams(_random_A(rng, 0, 10), big)
    nll = float(nll_supervised(s, r).value)
    gaps = [abs(float(cross_entropy_erform(FisherParams(k * r, big), s).value) - nll)
            for k in (1, 10, 100, 1000)]
    out.append(Check("Dirac limit |CE - NLL| at 1000", gaps[-1], 0.0, nan,
                     bool(np.all(np.diff(gaps) < 0) and gaps[-1] < 0.05)))

    f = FisherParams(_random_A(rng, 0, 10))
    R = sample_uniform_rotation(rng, 10**5)
    top = float(log_pdf(f, mode(f)))
    best = float(log_pdf(f, R).max())
    out.append(Check("mode beats 1e5 Haar samples", top, best, nan, top >= best))

    Rs = sample_uniform_rotation(rng, 200)
    back = quat_to_rot(rot_to_quat(Rs))
    out.append(Check("R -> q -> R round trip |dR|", float(np.abs(back - Rs).max()), 0.0, nan,
                     bool(np.abs(back - Rs).max() < 1e-12)))

    img = render_axis_marginal(np.diag([5.0, 5, 5]), 0, workers=1)
    out.append(Check("sphere marginal mass", img.total_mass(), 1.0, nan, abs(img.total_mass() - 1) < 0.02))
    return out


def run_checks(seed: int = 0, fast: bool = False) -> list[Check]:
    n = 10**5 if fast else 10**6
    jobs = [lambda: _mc_checks(seed, n), lambda: _deterministic_checks(seed)]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda j: j(), jobs))
    else:
        parts = [j() for j in jobs]
    return [c for part in parts for c in part]


def format_table(checks) -> str:
    lines = [HEADER, "-" * len(HEADER)]
    lines += [c.row() for c in checks]
    n_pass = sum(c.passed for c in checks)
    lines.append(f"{n_pass}/{len(checks)} checks passed")
    return "\n".join(lines)
