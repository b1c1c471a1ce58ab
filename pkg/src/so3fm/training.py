"""Two-stage semi-supervised training on the synthetic task.

Stage one fits the regressor on labeled data with the NLL loss.  Stage two
clones it into a student and an EMA teacher; each step the teacher labels a
weakly augmented unlabeled batch, predictions whose entropy exceeds ``tau``
are discarded, and the student is fit to the rest from strongly augmented
inputs alongside the labeled loss.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .fisher import OutOfRangeError, QuadratureConfig, entropy, mode
from .losses import nll_supervised, total_loss
from .network import HEADS, Regressor, backward, ema_update, forward
from .so3 import geodesic_angle
from .synthetic import Dataset, gen_synthetic_dataset, strong_augment, weak_augment

log = logging.getLogger(__name__)

SCHEMA = "so3fm.train/1"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    schema: str = SCHEMA
    seed: int = 0
    mode: str = "fishermatch"  # or "supervised"
    n_labeled: int = 200
    n_unlabeled: int = 4000
    n_test: int = 1000
    n_keypoints: int = 8
    data_noise: float = 0.01
    hidden: int = 128
    head: str = "fisher"
    optimizer: str = "sgd"
    lr: float = 1e-2
    pretrain_batch: int = 32
    pretrain_steps: int = 4000
    pretrain_patience: int = 500
    pretrain_min_delta: float = 1e-4
    batch_labeled: int = 32
    batch_unlabeled: int = 128
    ssl_steps: int = 3000
    lambda_u: float = 1.0
    tau: float | None = -5.3
    tau_coverage: float | None = 0.4
    unsup_loss: str = "ce"
    unlabeled_denominator: str = "batch"
    ema_decay: float = 0.999
    weak_noise: float = 0.01
    strong_noise: float = 0.05
    dropout: float = 0.1
    augment_labeled: bool = True
    snapshot_every: int = 200
    s_max: float = 5000.0

    def __post_init__(self):
        if self.schema != SCHEMA:
            raise ValueError(f"unsupported config schema {self.schema!r}")
        if self.batch_labeled < 1 or self.batch_unlabeled < 1 or self.pretrain_batch < 1:
            raise ValueError("batch sizes must be >= 1")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError("ema_decay must lie in [0, 1]")
        if self.mode not in ("fishermatch", "supervised"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.unsup_loss not in ("ce", "ce_qform", "nll"):
            raise ValueError(f"unknown unsupervised loss {self.unsup_loss!r}")
        if self.unlabeled_denominator not in ("batch", "passed"):
            raise ValueError(f"unknown denominator {self.unlabeled_denominator!r}")
        if self.tau is None and self.tau_coverage is None:
            raise ValueError("set tau or tau_coverage")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        if "schema" not in d:
            raise ValueError("config is missing the 'schema' field")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def quadrature(self) -> QuadratureConfig:
        return QuadratureConfig(s_max=self.s_max)


@dataclass
class Splits:
    labeled: Dataset
    unlabeled: Dataset
    test: Dataset


def make_splits(cfg: TrainConfig) -> Splits:
    """Disjoint labeled / unlabeled sets and a held-out test set; the
    unlabeled labels are kept only for logging pseudo-label quality."""
    pool = gen_synthetic_dataset(cfg.n_labeled + cfg.n_unlabeled, cfg.n_keypoints,
                                 cfg.data_noise, seed=cfg.seed)
    test = gen_synthetic_dataset(cfg.n_test, cfg.n_keypoints, cfg.data_noise,
                                 seed=cfg.seed + 1_000_003)
    idx = np.arange(len(pool))
    return Splits(pool.subset(idx[:cfg.n_labeled]), pool.subset(idx[cfg.n_labeled:]), test)


class Optimizer:
    """Plain SGD or Adam over a list of parameter arrays, updated in place."""

    def __init__(self, kind: str, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.kind, self.lr = kind, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = self.v = None

    def step(self, params, grads):
        if self.kind == "sgd":
            for p, g in zip(params, grads):
                p -= self.lr * g
            return
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _rngs(seed: int, stage: int):
    ss = np.random.SeedSequence([seed, stage])
    return [np.random.default_rng(c) for c in ss.spawn(2)]


def _finite(value, grads, where):
    if not math.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads):
        raise TrainingDiverged(f"non-finite loss or gradient during {where} (loss={value})")


def _forward(model: Regressor, x, cfg: TrainConfig, where: str = "evaluation"):
    try:
        return forward(model, x, HEADS[cfg.head], cfg.quadrature)
    except OutOfRangeError as e:
        raise TrainingDiverged(f"network output left the quadrature range during {where}: {e}") from e


def _predict(model: Regressor, x, cfg: TrainConfig):
    return _forward(model, x, cfg)[0]


def _labeled_batch(labeled: Dataset, rng, cfg: TrainConfig, batch: int):
    idx = rng.choice(len(labeled), size=min(batch, len(labeled)), replace=False)
    x = labeled.features[idx]
    if cfg.augment_labeled:
        x = weak_augment(x, rng, cfg.weak_noise)
    return x, labeled.labels[idx]


def pretrain(cfg: TrainConfig, labeled: Dataset, on_step=None) -> tuple[Regressor, np.ndarray]:
    """Supervised NLL fit.  Stops after ``pretrain_steps`` or once the
    100-step smoothed loss improves by less than ``pretrain_min_delta`` over
    ``pretrain_patience`` steps.  Returns the model and the loss trace."""
    if len(labeled) == 0:
        raise ValueError("labeled set is empty")
    head = HEADS[cfg.head]
    init_rng, data_rng = _rngs(cfg.seed, 0)
    model = Regressor.init(labeled.features.shape[1], cfg.hidden, head.n_out, init_rng)
    opt = Optimizer(cfg.optimizer, cfg.lr)
    losses = []
    smooth = []
    for step in range(cfg.pretrain_steps):
        x, y = _labeled_batch(labeled, data_rng, cfg, cfg.pretrain_batch)
        pred, cache = _forward(model, x, cfg, "pretraining")
        loss = nll_supervised(pred, y)
        grads = backward(model, cache, loss.grad_A / len(x), head)
        value = float(loss.value.mean())
        _finite(value, grads, "pretraining")
        opt.step(model.params, grads)
        losses.append(value)
        smooth.append(float(np.mean(losses[-100:])))
        if on_step is not None:
            on_step(step, value)
        p = cfg.pretrain_patience
        if step >= p + 100 and smooth[-1 - p] - smooth[-1] < cfg.pretrain_min_delta:
            log.info("pretraining converged at step %d", step)
            break
    return model, np.array(losses)


def calibrate_tau(model: Regressor, unlabeled: Dataset, cfg: TrainConfig, coverage: float) -> float:
    """Entropy threshold passing ``coverage`` of weakly augmented unlabeled
    teacher predictions."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    x = weak_augment(unlabeled.features, rng, cfg.weak_noise)
    h = entropy(_predict(model, x, cfg))
    return float(np.quantile(h, coverage))


@dataclass
class EvalReport:
    mean_error_deg: float
    median_error_deg: float
    acc_30deg: float
    entropy_error_spearman: float
    pseudo_label_coverage_history: list = field(default_factory=list)
    pseudo_label_error_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def angular_errors(pred_rot, truth) -> np.ndarray:
    return geodesic_angle(pred_rot, truth)


def report_from_predictions(pred, truth) -> EvalReport:
    """Metrics for batched predicted distributions (their modes are the
    point predictions)."""
    err = angular_errors(mode(pred), truth)
    h = entropy(pred)
    if np.ptp(h) > 0 and np.ptp(err) > 0:
        rho = float(spearmanr(h, err).statistic)
    else:
        rho = float("nan")
    return EvalReport(
        mean_error_deg=float(err.mean()),
        median_error_deg=float(np.median(err)),
        acc_30deg=float(np.mean(err <= 30.0)),
        entropy_error_spearman=rho,
    )


def evaluate(model: Regressor, test: Dataset, cfg: TrainConfig | None = None) -> EvalReport:
    if len(test) == 0:
        raise ValueError("test set is empty")
    cfg = cfg or TrainConfig()
    return report_from_predictions(_predict(model, test.features, cfg), test.labels)


CSV_HEADER = ["step", "mean_err", "median_err", "acc30", "coverage", "pl_err",
              "student_pl_err", "mean_entropy"]


def snapshot(step, student, teacher, splits: Splits, tau: float, cfg: TrainConfig) -> dict:
    """Test metrics of the student plus pseudo-label statistics of the
    teacher over the whole unlabeled set."""
    rep = evaluate(student, splits.test, cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 11, step]))
    u = splits.unlabeled
    t_pred = _predict(teacher, weak_augment(u.features, rng, cfg.weak_noise), cfg)
    h = entropy(t_pred)
    passed = h <= tau
    t_mode = mode(t_pred)
    nan = float("nan")
    if passed.any():
        pl_err = float(geodesic_angle(t_mode[passed], u.labels[passed]).mean())
        s_mode = mode(_predict(student, u.features[passed], cfg))
        s_err = float(geodesic_angle(s_mode, t_mode[passed]).mean())
    else:
        pl_err = s_err = nan
    return {
        "step": step,
        "mean_err": rep.mean_error_deg,
        "median_err": rep.median_error_deg,
        "acc30": rep.acc_30deg,
        "coverage": float(passed.mean()),
        "pl_err": pl_err,
        "student_pl_err": s_err,
        "mean_entropy": float(h.mean()),
    }


@dataclass
class StepLog:
    """Per-step unlabeled-batch records, arrays of shape ``(steps, B_u)``."""

    entropy: np.ndarray
    passed: np.ndarray
    grad_norm: np.ndarray
    teacher_noise: np.ndarray | None = None
    student_noise: np.ndarray | None = None

    @property
    def coverage(self) -> np.ndarray:
        return self.passed.mean(axis=1)


@dataclass
class SslResult:
    student: Regressor
    teacher: Regressor
    tau: float
    history: list
    step_log: StepLog | None
    losses: np.ndarray


def ssl_train(cfg: TrainConfig, splits: Splits, pretrained: Regressor, tau: float,
              use_unlabeled: bool = True, record_noise: bool = False,
              on_step=None) -> SslResult:
    """Second stage.  With ``use_unlabeled=False`` this is the supervised
    baseline: identical labeled stream, optimizer and EMA, no unlabeled term.
    """
    head = HEADS[cfg.head]
    student, teacher = pretrained.copy(), pretrained.copy()
    opt = Optimizer(cfg.optimizer, cfg.lr)
    lab_rng, unl_rng = _rngs(cfg.seed, 1)
    B_u = cfg.batch_unlabeled
    steps = cfg.ssl_steps
    if use_unlabeled:
        ent = np.zeros((steps, B_u))
        gate = np.zeros((steps, B_u), dtype=bool)
        gnorm = np.zeros((steps, B_u))
        noise_t = np.zeros((steps, B_u)) if record_noise else None
        noise_s = np.zeros((steps, B_u)) if record_noise else None
    history = [snapshot(0, student, teacher, splits, tau, cfg)]
    losses = np.zeros(steps)
    for step in range(steps):
        x_l, y_l = _labeled_batch(splits.labeled, lab_rng, cfg, cfg.batch_labeled)
        pred_l, cache_l = _forward(student, x_l, cfg, f"SSL step {step}")
        unl = None
        if use_unlabeled:
            idx = unl_rng.choice(len(splits.unlabeled), size=B_u, replace=False)
            x_u = splits.unlabeled.features[idx]
            x_t = weak_augment(x_u, unl_rng, cfg.weak_noise)
            x_s = strong_augment(x_u, unl_rng, cfg.strong_noise, cfg.dropout)
            # teacher output is a constant: no cache kept, no gradient
            t_pred = _forward(teacher, x_t, cfg, f"SSL step {step}")[0]
            s_pred, cache_u = _forward(student, x_s, cfg, f"SSL step {step}")
            unl = (t_pred, s_pred)
        tl = total_loss((pred_l, y_l), unl, tau=tau, lambda_u=cfg.lambda_u,
                        kind=cfg.unsup_loss, denominator=cfg.unlabeled_denominator)
        grads = backward(student, cache_l, tl.grad_labeled, head)
        if use_unlabeled:
            g_u = backward(student, cache_u, tl.grad_unlabeled, head)
            grads = [a + b for a, b in zip(grads, g_u)]
            ent[step] = tl.decision.entropy
            gate[step] = tl.decision.passed
            gnorm[step] = np.linalg.norm(tl.grad_unlabeled.reshape(B_u, -1), axis=1)
            if record_noise:
                noise_t[step] = np.linalg.norm(x_t - x_u, axis=1)
                noise_s[step] = np.linalg.norm(x_s - x_u, axis=1)
        _finite(tl.value, grads, f"SSL step {step}")
        opt.step(student.params, grads)
        ema_update(teacher, student, cfg.ema_decay)
        losses[step] = tl.value
        if on_step is not None:
            on_step(step, tl)
        if (step + 1) % cfg.snapshot_every == 0 or step + 1 == steps:
            history.append(snapshot(step + 1, student, teacher, splits, tau, cfg))
            log.info("step %d: %s", step + 1, history[-1])
    step_log = StepLog(ent, gate, gnorm, noise_t, noise_s) if use_unlabeled else None
    return SslResult(student, teacher, tau, history, step_log, losses)


@dataclass
class RunResult:
    cfg: TrainConfig
    splits: Splits
    pretrained: Regressor
    ssl: SslResult
    report: EvalReport


def run(cfg: TrainConfig, splits: Splits | None = None, pretrained: Regressor | None = None) -> RunResult:
    """Pretrain (unless a model is supplied), pick ``tau``, run stage two in
    ``cfg.mode`` and evaluate the final student."""
    splits = splits or make_splits(cfg)
    if pretrained is None:
        pretrained, _ = pretrain(cfg, splits.labeled)
    if cfg.tau_coverage is not None:
        tau = calibrate_tau(pretrained, splits.unlabeled, cfg, cfg.tau_coverage)
    else:
        tau = float(cfg.tau)
    result = ssl_train(cfg, splits, pretrained, tau, use_unlabeled=cfg.mode == "fishermatch")
    report = evaluate(result.student, splits.test, cfg)
    report.pseudo_label_coverage_history = [h["coverage"] for h in result.history]
    report.pseudo_label_error_history = [h["pl_err"] for h in result.history]
    return RunResult(cfg, splits, pretrained, result, report)
