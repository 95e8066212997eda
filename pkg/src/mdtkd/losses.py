"""Distillation losses and target constructions.

Every loss returns ``(loss, dlogits)`` where ``loss`` is the batch mean and
``dlogits`` is its gradient with respect to the student's logits (so it already
carries the 1/batch factor). Targets never receive gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .nn import softmax_t

LOG_FLOOR = 1e-12


@dataclass
class LsConfig:
    epsilon: float
    num_classes: int


@dataclass
class KdConfig:
    T: float = 1.0
    lam: float = 1.0


def _check_pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} must be equal 2-D shapes")
    return pred, target


def ce_value(pred, target) -> float:
    """Mean over rows of -sum_k target_k log(max(pred_k, 1e-12))."""
    pred, target = _check_pair(pred, target)
    return float(-(target * np.log(np.maximum(pred, LOG_FLOOR))).sum(axis=1).mean())


def cross_entropy(pred, target):
    """CE(pred, target) with pred a softmax output; dlogits = (pred - target) / batch."""
    pred, target = _check_pair(pred, target)
    return ce_value(pred, target), (pred - target) / pred.shape[0]


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def label_smooth(y_gt, epsilon: float) -> np.ndarray:
    """(1 - eps) * y_gt + eps / N."""
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError(f"label-smoothing epsilon must be in [0, 1], got {epsilon}")
    y_gt = np.asarray(y_gt, dtype=np.float64)
    return (1.0 - epsilon) * y_gt + epsilon / y_gt.shape[-1]


def kd_loss(student_logits, teacher_logits, y_gt, cfg: KdConfig):
    """Hard-label CE plus lam * CE(softmax(s/T), softmax(t/T)).

    The soft term carries no T**2 factor.
    """
    if not cfg.T > 0:
        raise DomainError(f"temperature must be positive, got {cfg.T}")
    s = np.asarray(student_logits, dtype=np.float64)
    t = np.asarray(teacher_logits, dtype=np.float64)
    if s.shape != t.shape:
        raise ShapeError(f"student logits {s.shape} vs teacher logits {t.shape}")
    hard, d_hard = cross_entropy(softmax_t(s, 1.0), y_gt)
    ps_T = softmax_t(s, cfg.T)
    pt_T = softmax_t(t, cfg.T)
    soft = ce_value(ps_T, pt_T)
    d_soft = (ps_T - pt_T) / (cfg.T * s.shape[0])
    return hard + cfg.lam * soft, d_hard + cfg.lam * d_soft


def skd_loss(p_s, p_t, y_gt, alpha: float):
    """(1 - alpha) * CE(p_s, y_gt) + alpha * CE(p_s, p_t)."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must be in [0, 1], got {alpha}")
    p_s, y_gt = _check_pair(p_s, y_gt)
    _, p_t = _check_pair(p_s, p_t)
    loss = (1.0 - alpha) * ce_value(p_s, y_gt) + alpha * ce_value(p_s, p_t)
    target = (1.0 - alpha) * y_gt + alpha * p_t
    return loss, (p_s - target) / p_s.shape[0]


def rho_schedule(epoch: int, total_epochs: int) -> float:
    """Remaining/total epochs: 1 at epoch 0, 1/E at the last epoch."""
    if total_epochs < 1:
        raise DomainError(f"total_epochs must be >= 1, got {total_epochs}")
    if not 0 <= epoch < total_epochs:
        raise DomainError(f"epoch {epoch} outside [0, {total_epochs})")
    return (total_epochs - epoch) / total_epochs


def heuristic_teacher_dist(c: int, a: float, N: int, T: float = 1.0) -> np.ndarray:
    """Probability ``a`` on the correct class, the rest spread evenly, softened at temperature T.

    Softening applies the temperature softmax to the log-probabilities, so T=1
    returns the raw distribution.
    """
    if not 0.0 < a <= 1.0:
        raise DomainError(f"a must be in (0, 1], got {a}")
    if N < 2:
        raise DomainError(f"need at least two classes, got {N}")
    if not 0 <= c < N:
        raise DomainError(f"class index {c} outside [0, {N})")
    if not T > 0:
        raise DomainError(f"temperature must be positive, got {T}")
    other = (1.0 - a) / (N - 1)
    if a == other or abs(a - 1.0 / N) <= 1e-15:
        return np.full(N, 1.0 / N)
    p = np.full(N, other)
    p[c] = a
    if T == 1.0:
        return p
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    z = logp / T
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def heuristic_targets(labels, a: float, N: int, T: float = 1.0) -> np.ndarray:
    table = np.stack([heuristic_teacher_dist(c, a, N, T) for c in range(N)])
    return table[np.asarray(labels, dtype=np.int64)]
