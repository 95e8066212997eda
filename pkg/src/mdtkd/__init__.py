"""Self-knowledge distillation with matured dumb teachers, in plain numpy."""
from .config import (
    BornAgainTeacher, ConvergenceSpec, DistillConfig, HeuristicTeacher, MdtTeacher,
    PreMaturedTeacher, RandomInitTeacher, SelfSnapshotTeacher, TrainConfig, UniformTeacher,
    config_hash, method_tag,
)
from .datasets import Dataset, ToySpec, batches, generate_toy, load_mnist, load_mnist_dir
from .errors import ConfigError, DomainError, FormatError, ShapeError, StateError
from .grid import HyperGrid, expand, grid_search, read_log, report
from .losses import (
    KdConfig, cross_entropy, heuristic_teacher_dist, kd_loss, label_smooth, rho_schedule, skd_loss,
)
from .nn import (
    EVAL, TRAIN, Network, NetworkSpec, SgdConfig, build_network, load_network, save_network,
    sgd_step, softmax_t,
)
from .probe import ConfidenceGrid, GridSpec, boundary_metrics, export, probe, region_confidence
from .teachers import TeacherModel, build_teacher, detect_convergence, load_teacher, save_teacher
from .training import TrialRecord, evaluate, train

__version__ = "0.1.0"
