"""Teacher construction and frozen teacher predictions."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .config import (
    BornAgainTeacher, ConvergenceSpec, HeuristicTeacher, MdtTeacher, PreMaturedTeacher,
    RandomInitTeacher, SelfSnapshotTeacher, TrainConfig, UniformTeacher,
    teacher_from_dict, teacher_to_dict,
)
from .datasets import Dataset
from .errors import ConfigError, FormatError
from .losses import LOG_FLOOR, heuristic_targets
from .nn import EVAL, Network, _Reader, build_network, read_network, to_bytes

_TEACHER_MAGIC = b"MDTT"
_TEACHER_VERSION = 1
_KIND_TAGS = {
    "uniform": 1, "random_init": 2, "pre_matured": 3, "heuristic": 4,
    "born_again": 5, "self_snapshot": 6, "mdt": 7,
}


@dataclass
class TeacherModel:
    """A fixed predictor: either an analytic generator or a frozen network.

    Network teachers are always evaluated in EVAL mode (no dropout, running
    batch-norm statistics), so repeated predictions agree bitwise.
    """

    spec: object
    num_classes: int
    network: Network | None = None
    epochs: int = 0
    final_loss: float = float("nan")
    loss_history: list = field(default_factory=list)

    def predict(self, x, labels=None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if isinstance(self.spec, UniformTeacher):
            return np.full((x.shape[0], self.num_classes), 1.0 / self.num_classes)
        if isinstance(self.spec, HeuristicTeacher):
            if labels is None:
                raise ConfigError("heuristic teacher needs the ground-truth labels")
            return heuristic_targets(labels, self.spec.a, self.num_classes, self.spec.T)
        probs, _ = self.network.forward(x, EVAL)
        return probs

    def logits(self, x, labels=None) -> np.ndarray:
        if self.network is not None:
            return self.network.forward(np.asarray(x, dtype=np.float64), EVAL)[1].logits
        return np.log(np.maximum(self.predict(x, labels), LOG_FLOOR))

    def provenance(self) -> dict:
        return {
            "spec": teacher_to_dict(self.spec),
            "epochs": self.epochs,
            "final_loss": self.final_loss,
            "loss_history": list(self.loss_history),
        }


def teacher_predict(t: TeacherModel, x, labels=None) -> np.ndarray:
    return t.predict(x, labels)


def detect_convergence(history, spec: ConvergenceSpec) -> bool:
    """True when the trailing ``window`` losses span less than ``rel_tol`` of their mean."""
    if len(history) == 0:
        raise ValueError("empty loss history")
    if len(history) < spec.window:
        return False
    w = np.asarray(history[-spec.window:], dtype=np.float64)
    return bool((w.max() - w.min()) / max(1e-12, abs(w.mean())) < spec.rel_tol)


def teacher_train_config(spec, base: TrainConfig) -> TrainConfig | None:
    """The config a trained teacher is fitted with, or None for untrained teachers."""
    plain = replace(base, distill=None, method=None)
    if isinstance(spec, PreMaturedTeacher):
        return replace(plain, epochs=spec.epochs)
    if isinstance(spec, BornAgainTeacher):
        return replace(plain, seed=spec.seed, network=replace(base.network, init_seed=spec.seed))
    if isinstance(spec, MdtTeacher):
        # dropout only: penalties and label smoothing are switched off
        return replace(
            plain,
            epochs=spec.convergence.max_epochs,
            label_smoothing=0.0,
            sgd=replace(base.sgd, l1_lambda=0.0, l2_lambda=0.0),
            network=replace(base.network, dropout_p=spec.dropout_p),
        )
    return None


def build_teacher(spec, dataset: Dataset, base: TrainConfig, student_history=None) -> TeacherModel:
    """Build (and if needed train) the teacher described by ``spec``.

    ``student_history`` is a sequence of end-of-epoch student networks, required
    for self-snapshot teachers.
    """
    from .training import train

    n_classes = base.network.layer_sizes[-1]
    if isinstance(spec, (UniformTeacher, HeuristicTeacher)):
        return TeacherModel(spec, n_classes)
    if isinstance(spec, RandomInitTeacher):
        return TeacherModel(spec, n_classes, build_network(replace(base.network, init_seed=spec.seed)))
    if isinstance(spec, SelfSnapshotTeacher):
        if not student_history or len(student_history) < spec.lag_epochs:
            raise ConfigError(
                f"self-snapshot teacher needs >= {spec.lag_epochs} student checkpoints"
            )
        return TeacherModel(spec, n_classes, student_history[-spec.lag_epochs].copy(),
                            epochs=len(student_history) - spec.lag_epochs + 1)
    cfg = teacher_train_config(spec, base)
    if cfg is None:
        raise ConfigError(f"unsupported teacher spec {spec!r}")
    stop = None
    if isinstance(spec, MdtTeacher):
        conv = spec.convergence
        stop = lambda hist: detect_convergence(hist, conv)  # noqa: E731
    net, record = train(cfg, dataset, None, stop_when=stop)
    hist = record.loss_history
    return TeacherModel(spec, n_classes, net, epochs=len(hist),
                        final_loss=hist[-1] if hist else float("nan"), loss_history=hist)


# ---------------------------------------------------------------------------
# persistence: provenance header followed by the network container


def teacher_to_bytes(t: TeacherModel) -> bytes:
    spec_json = json.dumps(teacher_to_dict(t.spec), sort_keys=True).encode()
    parts = [
        _TEACHER_MAGIC,
        struct.pack("<IBIIdI", _TEACHER_VERSION, _KIND_TAGS[t.spec.kind], t.num_classes,
                    t.epochs, t.final_loss, len(spec_json)),
        spec_json,
        struct.pack("<B", t.network is not None),
    ]
    if t.network is not None:
        parts.append(to_bytes(t.network))
    return b"".join(parts)


def teacher_from_bytes(data: bytes) -> TeacherModel:
    r = _Reader(data)
    (magic,) = r.take("<4s", "teacher magic")
    if magic != _TEACHER_MAGIC:
        raise FormatError(f"bad teacher magic {magic!r}")
    version, tag, n_classes, epochs, final_loss, n_json = r.take("<IBIIdI", "teacher header")
    if version != _TEACHER_VERSION:
        raise FormatError(f"unsupported teacher format version {version}")
    if r.pos + n_json > len(data):
        raise FormatError("truncated teacher spec")
    spec = teacher_from_dict(json.loads(data[r.pos:r.pos + n_json].decode()))
    r.pos += n_json
    if _KIND_TAGS[spec.kind] != tag:
        raise FormatError(f"teacher tag {tag} disagrees with spec kind {spec.kind}")
    (has_net,) = r.take("<B", "network flag")
    net = read_network(r) if has_net else None
    if r.pos != len(data):
        raise FormatError("trailing bytes after teacher container")
    return TeacherModel(spec, n_classes, net, epochs=epochs, final_loss=final_loss)


def save_teacher(t: TeacherModel, path) -> None:
    with open(path, "wb") as f:
        f.write(teacher_to_bytes(t))


def load_teacher(path) -> TeacherModel:
    with open(path, "rb") as f:
        return teacher_from_bytes(f.read())
