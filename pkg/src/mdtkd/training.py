"""Training and distillation loop plus evaluation."""
from __future__ import annotations

import time
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import SelfSnapshotTeacher, TrainConfig, config_hash, method_tag
from .datasets import Dataset, batches
from .errors import ConfigError, DomainError, ShapeError
from .losses import KdConfig, cross_entropy, kd_loss, label_smooth, one_hot, rho_schedule, skd_loss
from .nn import EVAL, TRAIN, Network, build_network, sgd_step


@dataclass
class TrialRecord:
    config: dict
    seed: int
    method: str
    config_hash: str
    train_accuracy: float
    train_loss: float
    test_accuracy: float | None
    loss_history: list = field(default_factory=list)
    test_accuracy_history: list = field(default_factory=list)
    alpha_history: list = field(default_factory=list)
    epochs_run: int = 0
    wall_time: float = 0.0
    teacher: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        return cls(**d)

    def key(self) -> tuple[str, int]:
        return self.config_hash, self.seed


def dropout_rng(seed: int) -> np.random.Generator:
    # separate stream from the shuffling permutations
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xD5])))


def evaluate(net: Network, ds: Dataset, chunk: int = 8192) -> dict:
    """EVAL-mode accuracy (argmax, ties to the lowest class) and mean hard-label CE."""
    if len(ds) == 0:
        raise DomainError("cannot evaluate on an empty dataset")
    if ds.dim != net.input_size:
        raise ShapeError(f"dataset has {ds.dim} features, network expects {net.input_size}")
    correct = 0
    loss_sum = 0.0
    for start in range(0, len(ds), chunk):
        x = ds.features[start:start + chunk]
        y = ds.labels[start:start + chunk]
        probs, _ = net.forward(x, EVAL)
        correct += int((probs.argmax(axis=1) == y).sum())
        loss, _ = cross_entropy(probs, one_hot(y, net.num_classes))
        loss_sum += loss * len(y)
    return {"accuracy": correct / len(ds), "mean_loss": loss_sum / len(ds)}


def train(cfg: TrainConfig, train_ds: Dataset, test_ds: Dataset | None = None, teacher=None,
          stop_when=None, net: Network | None = None):
    """Fit a network under ``cfg``; returns ``(network, TrialRecord)``.

    Per batch: TRAIN-mode forward, target mixing with the teacher (when one is
    attached), backward, SGD step with penalties. With ``cfg.distill.adaptive`` the
    interpolate rate at epoch e is ``rho(e) * alpha``. ``stop_when(loss_history)`` may
    end training early; self-snapshot teachers are maintained internally.
    """
    cfg.validate()
    if train_ds.dim != cfg.network.layer_sizes[0]:
        raise ShapeError(f"data has {train_ds.dim} features, network expects {cfg.network.layer_sizes[0]}")
    if train_ds.num_classes != cfg.network.layer_sizes[-1]:
        raise ConfigError("dataset class count does not match the network output size")
    dc = cfg.distill
    snapshot = dc is not None and isinstance(dc.teacher, SelfSnapshotTeacher)
    if dc is not None and teacher is None and not snapshot:
        raise ConfigError("distillation config given but no teacher was built")
    if teacher is not None and teacher.num_classes != cfg.network.layer_sizes[-1]:
        raise ConfigError(
            f"teacher predicts {teacher.num_classes} classes, network has {cfg.network.layer_sizes[-1]}"
        )

    started = time.perf_counter()
    net = net if net is not None else build_network(cfg.network)
    rng = dropout_rng(cfg.seed)
    bs = cfg.batch_size or len(train_ds)
    n_classes = net.num_classes
    ring = deque(maxlen=dc.teacher.lag_epochs) if snapshot else None
    loss_hist, acc_hist, alpha_hist = [], [], []

    for epoch in range(cfg.epochs):
        current = teacher
        if snapshot:
            from .teachers import TeacherModel

            current = None
            if len(ring) == ring.maxlen:
                current = TeacherModel(dc.teacher, n_classes, ring[0])
        rate = 0.0
        if dc is not None and current is not None:
            rho = rho_schedule(epoch, cfg.epochs) if dc.adaptive else 1.0
            rate = rho * dc.alpha if dc.loss == "skd" else rho * dc.kd_lambda
        alpha_hist.append(rate)

        total = 0.0
        for xb, yb in batches(train_ds, bs, cfg.seed, epoch):
            target = label_smooth(yb, cfg.label_smoothing) if cfg.label_smoothing else yb
            probs, cache = net.forward(xb, TRAIN, rng)
            if current is None:
                loss, dlogits = cross_entropy(probs, target)
            elif dc.loss == "kd":
                labels = yb.argmax(axis=1)
                loss, dlogits = kd_loss(cache.logits, current.logits(xb, labels), target,
                                        KdConfig(dc.T, rate))
            else:
                labels = yb.argmax(axis=1)
                loss, dlogits = skd_loss(probs, current.predict(xb, labels), target, rate)
            net.backward(cache, dlogits)
            sgd_step(net, cfg.sgd)
            total += loss * xb.shape[0]
        loss_hist.append(total / len(train_ds))
        if test_ds is not None:
            acc_hist.append(evaluate(net, test_ds)["accuracy"])
        if snapshot:
            ring.append(net.copy())
        if stop_when is not None and stop_when(loss_hist):
            break

    final_train = evaluate(net, train_ds)
    record = TrialRecord(
        config=cfg.to_dict(),
        seed=cfg.seed,
        method=method_tag(cfg),
        config_hash=config_hash(cfg),
        train_accuracy=final_train["accuracy"],
        train_loss=final_train["mean_loss"],
        test_accuracy=acc_hist[-1] if acc_hist else None,
        loss_history=loss_hist,
        test_accuracy_history=acc_hist,
        alpha_history=alpha_hist if dc is not None else [],
        epochs_run=len(loss_hist),
        wall_time=time.perf_counter() - started,
        teacher=teacher.provenance() if teacher is not None else None,
    )
    return net, record
