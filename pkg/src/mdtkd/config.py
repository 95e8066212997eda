"""Training, distillation and teacher configuration records.

Everything here round-trips through plain dicts (``to_dict`` / ``from_dict``) so
configs can live in JSON files and be hashed canonically.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import ClassVar, Union

from .errors import ConfigError
from .nn import NetworkSpec, SgdConfig


@dataclass
class ConvergenceSpec:
    max_epochs: int = 500
    window: int = 10
    rel_tol: float = 1e-3

    def validate(self) -> None:
        if self.window < 2:
            raise ConfigError(f"convergence window must be >= 2, got {self.window}")
        if not self.rel_tol > 0:
            raise ConfigError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")


# teacher variants -----------------------------------------------------------


@dataclass
class UniformTeacher:
    """Uniform distribution as teacher (label smoothing seen as distillation)."""

    kind: ClassVar[str] = "uniform"


@dataclass
class RandomInitTeacher:
    kind: ClassVar[str] = "random_init"
    seed: int = 1


@dataclass
class PreMaturedTeacher:
    kind: ClassVar[str] = "pre_matured"
    epochs: int = 1


@dataclass
class HeuristicTeacher:
    kind: ClassVar[str] = "heuristic"
    a: float = 0.9
    T: float = 1.0


@dataclass
class BornAgainTeacher:
    kind: ClassVar[str] = "born_again"
    seed: int = 1


@dataclass
class SelfSnapshotTeacher:
    kind: ClassVar[str] = "self_snapshot"
    lag_epochs: int = 1


@dataclass
class MdtTeacher:
    """Matured dumb teacher: same architecture, extreme dropout, trained to a loss plateau."""

    kind: ClassVar[str] = "mdt"
    dropout_p: float = 0.99
    convergence: ConvergenceSpec = field(default_factory=ConvergenceSpec)


TeacherSpec = Union[
    UniformTeacher, RandomInitTeacher, PreMaturedTeacher, HeuristicTeacher,
    BornAgainTeacher, SelfSnapshotTeacher, MdtTeacher,
]

TEACHER_KINDS = {
    cls.kind: cls
    for cls in (UniformTeacher, RandomInitTeacher, PreMaturedTeacher, HeuristicTeacher,
                BornAgainTeacher, SelfSnapshotTeacher, MdtTeacher)
}

METHOD_TAGS = {
    "uniform": "LS-teacher",
    "random_init": "RI-KD",
    "pre_matured": "TF-KD_self",
    "heuristic": "TF-KD_reg",
    "born_again": "BAN",
    "self_snapshot": "Self-KD",
    "mdt": "mDT-KD",
}


def teacher_to_dict(spec) -> dict:
    d = {"kind": spec.kind}
    d.update(dataclasses.asdict(spec))
    return d


def teacher_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in TEACHER_KINDS:
        raise ConfigError(f"unknown teacher kind {kind!r}; expected one of {sorted(TEACHER_KINDS)}")
    cls = TEACHER_KINDS[kind]
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown fields for {kind} teacher: {sorted(unknown)}")
    if cls is MdtTeacher and "convergence" in d:
        d["convergence"] = ConvergenceSpec(**d["convergence"])
    spec = cls(**d)
    validate_teacher(spec)
    return spec


def validate_teacher(spec) -> None:
    if isinstance(spec, MdtTeacher):
        if not 0.0 <= spec.dropout_p < 1.0:
            raise ConfigError(f"mDT dropout_p must be in [0, 1), got {spec.dropout_p}")
        spec.convergence.validate()
    elif isinstance(spec, HeuristicTeacher):
        if not 0.0 < spec.a <= 1.0 or not spec.T > 0:
            raise ConfigError(f"heuristic teacher needs 0 < a <= 1 and T > 0, got {spec}")
    elif isinstance(spec, PreMaturedTeacher) and spec.epochs < 1:
        raise ConfigError("pre-matured teacher needs epochs >= 1")
    elif isinstance(spec, SelfSnapshotTeacher) and spec.lag_epochs < 1:
        raise ConfigError("self-snapshot teacher needs lag_epochs >= 1")


# training --------------------------------------------------------------------


@dataclass
class DistillConfig:
    teacher: TeacherSpec
    alpha: float = 0.01
    adaptive: bool = False
    loss: str = "skd"  # "skd" (interpolated CE) or "kd" (hard CE + lambda * tempered CE)
    T: float = 1.0
    kd_lambda: float = 1.0

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.loss not in ("skd", "kd"):
            raise ConfigError(f"unknown distillation loss {self.loss!r}")
        if not self.T > 0 or self.kd_lambda < 0:
            raise ConfigError("kd temperature must be positive and kd_lambda non-negative")
        validate_teacher(self.teacher)


@dataclass
class TrainConfig:
    network: NetworkSpec
    sgd: SgdConfig = field(default_factory=SgdConfig)
    epochs: int = 500
    batch_size: int | None = None  # None: full batch
    seed: int = 0
    label_smoothing: float = 0.0
    distill: DistillConfig | None = None
    method: str | None = None

    def validate(self) -> None:
        self.network.validate()
        self.sgd.validate()
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.label_smoothing <= 1.0:
            raise ConfigError(f"label_smoothing must be in [0, 1], got {self.label_smoothing}")
        if self.distill is not None:
            self.distill.validate()

    def to_dict(self) -> dict:
        d = {
            "network": dataclasses.asdict(self.network),
            "sgd": dataclasses.asdict(self.sgd),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "label_smoothing": self.label_smoothing,
            "distill": None,
            "method": self.method,
        }
        if self.distill is not None:
            dd = dataclasses.asdict(self.distill)
            dd["teacher"] = teacher_to_dict(self.distill.teacher)
            d["distill"] = dd
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig fields: {sorted(unknown)}")
        if "network" not in d:
            raise ConfigError("TrainConfig needs a 'network' section")
        distill = None
        if d.get("distill") is not None:
            dd = dict(d["distill"])
            if "teacher" not in dd:
                raise ConfigError("distill section needs a 'teacher'")
            dd["teacher"] = teacher_from_dict(dd["teacher"])
            extra = set(dd) - {f.name for f in dataclasses.fields(DistillConfig)}
            if extra:
                raise ConfigError(f"unknown distill fields: {sorted(extra)}")
            distill = DistillConfig(**dd)
        bs = d.get("batch_size")
        cfg = cls(
            network=NetworkSpec.from_dict(d["network"]),
            sgd=SgdConfig.from_dict(d.get("sgd", {})),
            epochs=int(d.get("epochs", 500)),
            batch_size=None if bs is None else int(bs),
            seed=int(d.get("seed", 0)),
            label_smoothing=float(d.get("label_smoothing", 0.0)),
            distill=distill,
            method=d.get("method"),
        )
        cfg.validate()
        return cfg


def method_tag(cfg: TrainConfig) -> str:
    """Short method label used to group grid-search results."""
    if cfg.method:
        return cfg.method
    if cfg.distill is not None:
        tag = METHOD_TAGS[cfg.distill.teacher.kind]
        if cfg.distill.adaptive:
            tag += "_ada"
        if cfg.distill.loss == "kd":
            tag += "[kd]"
        return tag
    if cfg.label_smoothing > 0:
        return "LS"
    parts = [
        name for name, on in (
            ("l1", cfg.sgd.l1_lambda > 0),
            ("l2", cfg.sgd.l2_lambda > 0),
            ("dropout", cfg.network.dropout_p > 0),
        ) if on
    ]
    return "+".join(parts) or "baseline"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: TrainConfig) -> str:
    """Hash of the config with its seeds removed, so repeated seeds share a key."""
    d = cfg.to_dict()
    d.pop("seed")
    d["network"].pop("init_seed")
    return hashlib.sha256(canonical_json(d).encode()).hexdigest()[:16]
